//! Question phrasings and answer templates for the three sub-tasks.
//!
//! Templates use `{name}` placeholders. Rendering fails on a placeholder
//! with no value, naming it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::MetaAction;
use crate::simulator::scenario::Environment;
use crate::slow::{ImageBox, Signal, AEB_TOKEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template variable `{0}` has no value")]
    MissingVariable(String),
    #[error("unterminated placeholder in template `{0}`")]
    Unterminated(String),
    #[error("no templates for sub-task {0}")]
    Empty(&'static str),
}

/// Substitutes `{name}` placeholders from `vars`.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| TemplateError::Unterminated(template.to_string()))?;
        let name = &after[..close];
        let value = vars.get(name).ok_or_else(|| TemplateError::MissingVariable(name.to_string()))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn capitalized(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Facts about one critical object, as the answer templates need them.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFacts {
    pub description: String,
    pub image_box: Option<ImageBox>,
    pub distance: f64,
    pub signal: Option<Signal>,
    pub intention: Option<String>,
    pub ghost: bool,
}

/// Facts behind a decision answer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFacts {
    pub action: MetaAction,
    /// Noun phrase for the agent that motivates a non-normal action.
    pub hazard: Option<String>,
    pub time_to_contact: Option<f64>,
    /// The hazard is occluded from direct view.
    pub hazard_occluded: bool,
    /// A ghost is present and was dismissed.
    pub ghost_dismissed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub scenario_questions: Vec<String>,
    pub object_questions: Vec<String>,
    pub decision_questions: Vec<String>,
    pub scenario_answer: String,
    pub object_answer: String,
    pub ghost_answer: String,
    pub occluded_answer: String,
    pub no_object_answer: String,
    pub emergency_answer: String,
    pub warning_answer: String,
    pub occluded_warning_answer: String,
    pub normal_answer: String,
    pub ghost_normal_answer: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let s = |v: &[&str]| v.iter().map(|q| q.to_string()).collect::<Vec<_>>();
        Self {
            scenario_questions: s(&[
                "Describe the current driving scenario.",
                "What kind of road, weather and lighting is the ego vehicle driving in?",
                "Summarize the environment around the ego vehicle.",
                "Give a short description of the scene, including road type and conditions.",
                "Where is the ego vehicle driving, and under what conditions?",
                "Characterize the driving environment in one sentence.",
            ]),
            object_questions: s(&[
                "Identify the critical objects in the scene and where they are.",
                "Which objects could affect the ego vehicle? Give their boxes and distances.",
                "List the road users that matter for the ego vehicle's next maneuver.",
                "Point out the objects that the ego vehicle must pay attention to.",
                "What critical objects are present, how far away are they, and what are they doing?",
                "Locate each object relevant to safe driving and describe its likely intention.",
            ]),
            decision_questions: s(&[
                "Given the initial decision below, what should the ego vehicle do?\n{aeb_prompt}",
                "{aeb_prompt}\nIs this initial decision correct? Decide between Normal, Early Warning and Emergency Braking.",
                "The quick braking module reports: {aeb_prompt}\nWhat is your decision?",
                "Review the following initial decision and give the final braking decision.\n{aeb_prompt}",
                "{aeb_prompt}\nShould the vehicle continue, warn, or brake? Explain briefly.",
                "Decide the braking action for the ego vehicle, taking this initial decision into account: {aeb_prompt}",
            ]),
            scenario_answer: "The ego vehicle navigates {road_article} {road} under {weather} conditions in {area_article} {area} environment during {time_of_day}."
                .into(),
            object_answer: "{Article} {description}{signal_clause}, located at [({x_min}, {y_min}), ({x_max}, {y_max})], is {distance} meters away from the ego vehicle{intention_clause}."
                .into(),
            ghost_answer: "The {description} located at [({x_min}, {y_min}), ({x_max}, {y_max})] is a figure on a roadside advertisement, not a real road user, and is filtered out."
                .into(),
            occluded_answer: "{Article} {description} is occluded from direct view and is about to enter the planned path.".into(),
            no_object_answer: "No critical objects are present near the planned path.".into(),
            emergency_answer: "Emergency Braking. A collision with the {hazard} is expected in {time} seconds, so the vehicle must brake immediately."
                .into(),
            warning_answer: "Early Warning. The presence of the {hazard} may lead to a collision in {time} seconds, which calls for heightened awareness and readiness to stop."
                .into(),
            occluded_warning_answer: "Early Warning. The {hazard} is hidden from direct view and may step into the planned path within {time} seconds, so the vehicle should slow down and prepare to stop."
                .into(),
            normal_answer: "Normal. No real road user threatens the planned path, so the vehicle keeps its course.".into(),
            ghost_normal_answer: "Normal. The only apparent hazard is an advertisement figure rather than a real road user, so the vehicle keeps its course."
                .into(),
        }
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.scenario_questions.is_empty() {
            return Err(TemplateError::Empty("scenario_description"));
        }
        if self.object_questions.is_empty() {
            return Err(TemplateError::Empty("critical_objects"));
        }
        if self.decision_questions.is_empty() {
            return Err(TemplateError::Empty("decision_making"));
        }
        Ok(())
    }

    pub fn scenario_sentence(&self, env: &Environment) -> Result<String, TemplateError> {
        let vars = BTreeMap::from([
            ("road_article", article(&env.road).to_string()),
            ("road", env.road.clone()),
            ("weather", env.weather.clone()),
            ("area_article", article(&env.area).to_string()),
            ("area", env.area.clone()),
            ("time_of_day", env.time_of_day.clone()),
        ]);
        render(&self.scenario_answer, &vars)
    }

    pub fn object_sentence(&self, obj: &ObjectFacts) -> Result<String, TemplateError> {
        let mut vars = BTreeMap::from([
            ("Article", capitalized(article(&obj.description))),
            ("description", obj.description.clone()),
            ("distance", format!("{:.2}", obj.distance)),
            (
                "signal_clause",
                obj.signal.map(|s| format!(" with {}", s.phrase())).unwrap_or_default(),
            ),
            (
                "intention_clause",
                obj.intention.as_ref().map(|i| format!(", suggesting it is {i}")).unwrap_or_default(),
            ),
        ]);
        let Some(b) = obj.image_box else {
            return render(&self.occluded_answer, &vars);
        };
        vars.extend([
            ("x_min", b.x_min.to_string()),
            ("y_min", b.y_min.to_string()),
            ("x_max", b.x_max.to_string()),
            ("y_max", b.y_max.to_string()),
        ]);
        let template = if obj.ghost { &self.ghost_answer } else { &self.object_answer };
        render(template, &vars)
    }

    /// Object sentences in order, or the no-object sentence.
    pub fn objects_paragraph(&self, objects: &[ObjectFacts]) -> Result<String, TemplateError> {
        if objects.is_empty() {
            return Ok(self.no_object_answer.clone());
        }
        let sentences = objects.iter().map(|o| self.object_sentence(o)).collect::<Result<Vec<_>, _>>()?;
        Ok(sentences.join(" "))
    }

    /// Decision sentence: the action word, a reason, then the token rule.
    pub fn decision_sentence(&self, d: &DecisionFacts) -> Result<String, TemplateError> {
        let mut vars = BTreeMap::new();
        if let Some(h) = &d.hazard {
            vars.insert("hazard", h.clone());
        }
        if let Some(t) = d.time_to_contact {
            vars.insert("time", format!("{t:.1}"));
        }
        let template = match d.action {
            MetaAction::EmergencyBraking => &self.emergency_answer,
            MetaAction::EarlyWarning if d.hazard_occluded => &self.occluded_warning_answer,
            MetaAction::EarlyWarning => &self.warning_answer,
            MetaAction::Normal if d.ghost_dismissed => &self.ghost_normal_answer,
            MetaAction::Normal => &self.normal_answer,
        };
        let text = render(template, &vars)?;
        Ok(with_token(text, d.action))
    }
}

/// Appends the brake token to non-normal answers.
pub fn with_token(text: String, action: MetaAction) -> String {
    if action.is_hazard() {
        format!("{text} {AEB_TOKEN}")
    } else {
        text
    }
}
