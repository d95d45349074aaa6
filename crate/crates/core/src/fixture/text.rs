//! Inquiry wording for the generated corpus. Every template is written to
//! land in one rubric category, and the generator checks each result with the
//! scoring engine.

use rand::seq::IndexedRandom;
use rand::Rng;
use sensorlab_protocol::SensorType;

use crate::event::payload::InquiryText;
use crate::scoring::ScoreCategory;

pub(crate) struct Theme {
    pub subject: &'static str,
    pub titles: &'static [&'static str],
    pub labels: &'static [&'static str],
    pub hypothesis: &'static str,
    pub reason: &'static str,
    pub steps: [&'static str; 4],
}

pub(crate) fn theme(sensor: SensorType) -> &'static Theme {
    match sensor {
        SensorType::HeartRate => &Theme {
            subject: "heart rate",
            titles: &[
                "Heart rate after running",
                "Pulse before and after star jumps",
                "Resting heart rate",
                "Heart rate and music",
                "Sitting or standing pulse",
                "Heart rate challenge",
                "Our pulses",
                "Fastest heartbeat in the class",
            ],
            labels: &["resting", "after running", "after 20 star jumps", "sitting", "standing", "lying down", "after the stairs"],
            hypothesis: "my heart rate goes up after exercise",
            reason: "the heart pumps faster so the muscles get more oxygen",
            steps: [
                "Sit still for one minute and record the resting pulse",
                "Run around the court twice",
                "Measure the pulse again straight away",
                "Repeat after two minutes of rest",
            ],
        },
        SensorType::TempHumidity => &Theme {
            subject: "temperature",
            titles: &[
                "Classroom temperature",
                "Inside and outside",
                "Warm spots in the room",
                "Temperature in the hall",
                "Humidity in the bathroom",
                "Hot and cold spots",
                "Window or door",
            ],
            labels: &["by the window", "under the desk", "outside", "in the hall", "next to the heater", "in the fridge", "bathroom"],
            hypothesis: "it is warmer next to the window than by the door",
            reason: "the sun shines through the glass and heats the air",
            steps: [
                "Place the sensor by the window for one minute",
                "Record the temperature",
                "Move the sensor next to the door",
                "Wait one minute and record it again",
            ],
        },
        SensorType::LightUv => &Theme {
            subject: "UV index",
            titles: &[
                "UV at lunchtime",
                "Sunscreen and UV",
                "Shade and sun",
                "Light in the classroom",
                "Sunglasses test",
                "UV through the window",
            ],
            labels: &["in the sun", "in the shade", "under the tree", "through the window", "behind sunglasses", "classroom lights", "under foil"],
            hypothesis: "the UV index is lower in the shade",
            reason: "the tree blocks most of the sunlight",
            steps: [
                "Take the sensor outside at lunchtime",
                "Hold it up in full sun and record the UV index",
                "Move under the tree",
                "Record the UV index again",
            ],
        },
        SensorType::Voc => &Theme {
            subject: "VOC level",
            titles: &["Smelly markers", "Air in the art room", "Hand sanitiser smell", "Perfume test", "Fresh air check"],
            labels: &["open marker", "closed marker", "art room", "hand sanitiser", "window open", "perfume", "plain air"],
            hypothesis: "the air near the open markers has more VOC",
            reason: "the markers give off chemicals as the ink dries",
            steps: [
                "Measure the air in the middle of the room",
                "Hold the open markers near the sensor",
                "Wait thirty seconds",
                "Record the new reading",
            ],
        },
        SensorType::Conductance => &Theme {
            subject: "conductance",
            titles: &[
                "Milk fat and conductance",
                "Salt water",
                "Tap water and rain water",
                "Does sugar conduct",
                "Conductance of fruit juice",
                "Which liquid conducts",
            ],
            labels: &["tap water", "salt water", "sugar water", "trim milk", "full cream milk", "lemon juice", "rain water"],
            hypothesis: "salt water conducts better than tap water",
            reason: "the salt breaks into ions that carry the current",
            steps: [
                "Pour tap water into a cup",
                "Put both probes in and record the reading",
                "Mix in one spoon of salt",
                "Measure again with the same probes",
            ],
        },
        SensorType::BodyTemp => &Theme {
            subject: "body temperature",
            titles: &["Hand temperature", "Forehead and hand", "Cold hands", "Temperature after exercise", "Body temperature in class"],
            labels: &["forehead", "palm", "after cold water", "under arm", "after running", "fingertip"],
            hypothesis: "my forehead is warmer than my fingertips",
            reason: "blood flow keeps the middle of the body warmer",
            steps: [
                "Hold the sensor on your forehead for ten seconds",
                "Record the temperature",
                "Hold it on a fingertip",
                "Write down the second reading",
            ],
        },
    }
}

const PLAIN: &[&str] = &[
    "We measured the {subject}.",
    "Measuring {subject} in class with my group.",
    "Testing the sensor.",
    "Our group looked at the {subject} today.",
    "",
];

const NULL_NOTES: &[&str] = &["", "", "fun", "group work", "first try", "cool sensor"];

const HYPOTHESIS_LEADS: &[&str] = &["I think", "I predict", "We expect", "My hypothesis is that"];

const INTERPRETATION_LEADS: &[&str] = &[
    "The reading changed because",
    "It was different because",
    "This shows the {subject} changes, which means",
    "The numbers went up, therefore",
];

fn fill(template: &str, theme: &Theme) -> String {
    template.replace("{subject}", theme.subject)
}

fn hypothesis(theme: &Theme, rng: &mut impl Rng) -> String {
    format!("{} {}.", HYPOTHESIS_LEADS.choose(rng).expect("nonempty"), theme.hypothesis)
}

fn interpretation(theme: &Theme, rng: &mut impl Rng) -> String {
    format!("{} {}.", fill(INTERPRETATION_LEADS.choose(rng).expect("nonempty"), theme), theme.reason)
}

fn numbered(theme: &Theme, count: usize) -> String {
    theme.steps[..count].iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
}

fn bulleted(theme: &Theme, count: usize) -> String {
    theme.steps[..count].iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")
}

/// What the generator will write: the text plus the slot labels.
pub(crate) struct Authored {
    pub text: InquiryText,
    pub labels: Vec<String>,
}

/// Text and labels that score as `category`. `min_slots` is the fewest
/// captures the caller needs (1 for anything that will be published).
pub(crate) fn author(sensor: SensorType, category: ScoreCategory, min_slots: usize, rng: &mut impl Rng) -> Authored {
    let theme = theme(sensor);
    let title = theme.titles.choose(rng).expect("nonempty").to_string();
    let pick_labels = |rng: &mut dyn rand::RngCore, n: usize| -> Vec<String> {
        theme.labels.choose_multiple(rng, n).map(|l| l.to_string()).collect()
    };
    let plain_text = fill(PLAIN[rng.random_range(0..PLAIN.len())], theme);
    match category {
        ScoreCategory::Null => {
            let slots = rng.random_range(min_slots..=1.max(min_slots));
            let labels = if slots == 0 { Vec::new() } else { pick_labels(rng, 1) };
            let title = if min_slots == 0 && rng.random_bool(0.3) { String::new() } else { title };
            let description =
                if rng.random_bool(0.5) { String::new() } else { fill(PLAIN[rng.random_range(0..PLAIN.len())], theme) };
            let notes = NULL_NOTES[rng.random_range(0..NULL_NOTES.len())].to_string();
            Authored { text: InquiryText { title, description, notes }, labels }
        }
        ScoreCategory::Naive => {
            if rng.random_bool(0.75) {
                let n = rng.random_range(2..=3);
                Authored {
                    text: InquiryText { title, description: plain_text, notes: String::new() },
                    labels: pick_labels(rng, n),
                }
            } else {
                let n = rng.random_range(min_slots.max(1)..=2);
                let steps = rng.random_range(2..=4);
                Authored {
                    text: InquiryText { title, description: plain_text, notes: bulleted(theme, steps) },
                    labels: pick_labels(rng, n),
                }
            }
        }
        ScoreCategory::Emerging => {
            let n = rng.random_range(min_slots.max(1)..=3);
            let labels = pick_labels(rng, n);
            let (description, notes) = match rng.random_range(0..4) {
                0 => (hypothesis(theme, rng), String::new()),
                1 => (plain_text, interpretation(theme, rng)),
                2 => (hypothesis(theme, rng), interpretation(theme, rng)),
                _ => (format!("{}\n{}", hypothesis(theme, rng), numbered(theme, 3)), String::new()),
            };
            Authored { text: InquiryText { title, description, notes }, labels }
        }
        ScoreCategory::Informed => {
            let n = rng.random_range(min_slots.max(2)..=3);
            let steps = rng.random_range(3..=4);
            Authored {
                text: InquiryText {
                    title,
                    description: format!("{}\n{}", hypothesis(theme, rng), numbered(theme, steps)),
                    notes: interpretation(theme, rng),
                },
                labels: pick_labels(rng, n),
            }
        }
    }
}

/// Researcher exemplar for one sensor: hypothesis, method and conclusion.
pub(crate) fn exemplar(sensor: SensorType) -> Authored {
    let theme = theme(sensor);
    Authored {
        text: InquiryText {
            title: format!("Exemplar: {}", theme.titles[0]),
            description: format!("I predict {}.\n{}", theme.hypothesis, numbered(theme, 4)),
            notes: format!("The second reading was different because {}.", theme.reason),
        },
        labels: theme.labels[..3].iter().map(|l| l.to_string()).collect(),
    }
}

pub(crate) const COMMENTS: &[&str] = &[
    "Cool!",
    "Nice photos",
    "How did you get it so high?",
    "We got nearly the same numbers",
    "Try it outside next time",
    "Great job",
    "Can we do this one tomorrow?",
    "Wow",
];
