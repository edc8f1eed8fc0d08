//! Deterministic stand-in for the slow module, answering from privileged
//! scenario knowledge.

use std::collections::BTreeMap;

use crate::arbiter::MetaAction;
use crate::dataset::templates::{DecisionFacts, ObjectFacts, TemplateSet};
use crate::geometry::Pose2D;
use crate::kinematics::VehicleState;
use crate::simulator::oracle::{assess, label_ground_truth, Assessment, GroundTruthConfig, TickLabel};
use crate::simulator::scenario::{AgentSpec, Scenario};
use crate::simulator::world::World;

use super::protocol::{project_brake_signal, SlowRequest, SlowResponse};

/// Raw score magnitude; `σ(±ln 9)` is exactly 0.9 / 0.1.
pub const MOCK_SCORE: f64 = 2.197_224_577_336_219_6;

/// Objects named in a rationale, nearest first.
pub const MAX_RATIONALE_OBJECTS: usize = 4;

pub fn mock_score(action: MetaAction) -> f64 {
    match action {
        MetaAction::EmergencyBraking => MOCK_SCORE,
        MetaAction::EarlyWarning => 0.0,
        MetaAction::Normal => -MOCK_SCORE,
    }
}

/// Everything the mock knows about one scenario.
#[derive(Debug, Clone)]
pub struct OracleKnowledge {
    world: World,
    gt: GroundTruthConfig,
    labels: Vec<TickLabel>,
    agents: BTreeMap<String, usize>,
    templates: TemplateSet,
}

impl OracleKnowledge {
    pub fn new(sc: &Scenario, gt: GroundTruthConfig) -> Self {
        let agents = sc.agents.iter().enumerate().map(|(i, a)| (a.id.clone(), i)).collect();
        Self {
            world: World::new(sc.clone()),
            gt,
            labels: label_ground_truth(sc, &gt),
            agents,
            templates: TemplateSet::builtin(),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        self.world.scenario()
    }

    pub fn ticks(&self) -> u64 {
        self.labels.len() as u64
    }

    /// Labels of the no-brake run.
    pub fn labels(&self) -> &[TickLabel] {
        &self.labels
    }

    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.get(id).map(|&i| &self.world.agents()[i])
    }

    pub fn is_ghost(&self, id: &str) -> bool {
        self.agent(id).is_some_and(|a| a.ghost)
    }

    /// Time at which a hidden agent becomes visible to the quick path.
    pub fn revealed_at(&self, id: &str) -> Option<f64> {
        self.agent(id).and_then(|a| a.hidden_until)
    }

    /// Required action for an ego state reported at `tick`.
    pub fn assess(&self, tick: u64, ego: &VehicleState) -> Assessment {
        assess(&self.world, tick, ego, &self.gt)
    }
}

/// Reply for a request the mock cannot serve.
pub fn error_response(request_id: u64, message: &str) -> SlowResponse {
    SlowResponse {
        request_id,
        meta_action: MetaAction::Normal,
        rationale: format!("Protocol error: {message}."),
        brake_signal: 0.0,
    }
}

/// Answers from the hazard assessment of the reported ego state: ghosts
/// are ignored, hidden agents count.
pub fn mock_respond(req: &SlowRequest, oracle: &OracleKnowledge) -> SlowResponse {
    if req.tick >= oracle.ticks() {
        return error_response(
            req.request_id,
            &format!("tick {} is outside the scenario (0..{})", req.tick, oracle.ticks()),
        );
    }
    let sc = oracle.scenario();
    let ego = VehicleState::new(Pose2D::new(req.ego.x, req.ego.y, req.ego.heading), req.ego.speed).with_axles(sc.ego.lf, sc.ego.lr);
    let verdict = oracle.assess(req.tick, &ego);
    let t = oracle.world.time(req.tick);

    let mut objects: Vec<ObjectFacts> = req
        .scene_summary
        .iter()
        .take(MAX_RATIONALE_OBJECTS)
        .map(|o| {
            let spec = oracle.agent(&o.id);
            ObjectFacts {
                description: o.description.clone(),
                image_box: Some(o.image_box),
                distance: o.distance,
                signal: o.signal,
                intention: spec.and_then(|a| a.intention.clone()),
                ghost: spec.is_some_and(|a| a.ghost),
            }
        })
        .collect();
    let hazard = verdict.agent.as_deref().and_then(|id| oracle.agent(id));
    let hazard_occluded = hazard.is_some_and(|a| a.hidden_at(t));
    if let Some(a) = hazard.filter(|_| hazard_occluded) {
        objects.push(ObjectFacts {
            description: a.description(),
            image_box: None,
            distance: 0.0,
            signal: a.signal,
            intention: a.intention.clone(),
            ghost: false,
        });
    }

    let templates = &oracle.templates;
    let decision = DecisionFacts {
        action: verdict.action,
        hazard: hazard.map(|a| a.description()),
        time_to_contact: verdict.time_to_contact,
        hazard_occluded,
        ghost_dismissed: objects.iter().any(|o| o.ghost),
    };
    let rationale = [
        templates.scenario_sentence(&sc.environment),
        templates.objects_paragraph(&objects),
        templates.decision_sentence(&decision),
    ]
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .expect("built-in templates cover every variable")
    .join(" ");

    SlowResponse {
        request_id: req.request_id,
        meta_action: verdict.action,
        rationale,
        brake_signal: project_brake_signal(mock_score(verdict.action)),
    }
}
