//! Explanations of a robot's local path deviations.
//!
//! The pipeline: a [`world::Scenario`] is planned on ([`planning`]), the
//! deviation of the local plan is attributed to object-affordance pairs
//! ([`attribution`]), and each attribution is rendered as an explanation map
//! ([`visual`]) and as counterfactual text ([`text`]). [`variants`] builds the
//! style batteries used in comprehension studies.

pub mod attribution;
pub mod planning;
pub mod text;
pub mod variants;
pub mod visual;
pub mod world;
