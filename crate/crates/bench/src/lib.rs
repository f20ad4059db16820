//! Fixtures shared by the engine benchmarks.

use ripple_core::sim::{generate_cohort, CohortSpec};
use ripple_core::{CourseState, EngineConfig, Event};

/// Synthetic course log with peer activity, seed 42.
pub fn cohort_events(students: usize, questions: usize, answers: usize) -> Vec<Event> {
    let spec = CohortSpec {
        n_students: students,
        n_questions: questions,
        answers_per_student: answers,
        seed: 42,
        ..Default::default()
    };
    generate_cohort(&spec).expect("valid spec").events
}

pub fn replayed(events: &[Event]) -> CourseState {
    let course = events.first().map(|e| e.course.clone()).unwrap_or_else(|| "BENCH".into());
    CourseState::replay(course, EngineConfig::default(), events)
}
