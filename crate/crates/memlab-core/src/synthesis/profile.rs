//! Simulated user personas: MBTI-blended personalities plus a relationship
//! graph constrained for realism.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{RelatedPerson, Relation, RelationshipGraph, UserProfile};
use crate::gateway::{CallKind, Gateway};
use crate::prompts;

use super::SynthesisError;

pub const MBTI_TYPES: [&str; 16] = [
    "INTJ", "INTP", "ENTJ", "ENTP", "INFJ", "INFP", "ENFJ", "ENFP", "ISTJ", "ISFJ", "ESTJ", "ESFJ",
    "ISTP", "ISFP", "ESTP", "ESFP",
];

const FIRST_NAMES: [&str; 24] = [
    "Alex", "Bailey", "Cameron", "Dana", "Elliot", "Frankie", "Harper", "Jamie", "Jordan", "Casey",
    "Morgan", "Quinn", "Riley", "Rowan", "Sage", "Taylor", "Avery", "Blake", "Drew", "Emerson",
    "Finley", "Hayden", "Kendall", "Logan",
];

const LAST_NAMES: [&str; 16] = [
    "Brooks", "Carter", "Dalton", "Ellis", "Foster", "Gray", "Hayes", "Ingram", "Jensen", "Keller",
    "Lawson", "Mercer", "Nolan", "Parker", "Reyes", "Sutton",
];

const LOCATIONS: [&str; 12] = [
    "Portland",
    "Austin",
    "Edinburgh",
    "Toronto",
    "Auckland",
    "Lisbon",
    "Copenhagen",
    "Denver",
    "Galway",
    "Osaka",
    "Valencia",
    "Tallinn",
];

const PROFESSIONS: [&str; 14] = [
    "teacher",
    "software developer",
    "nurse",
    "accountant",
    "architect",
    "chef",
    "librarian",
    "electrician",
    "graphic designer",
    "physiotherapist",
    "journalist",
    "project manager",
    "pharmacist",
    "land surveyor",
];

const GENDERS: [&str; 3] = ["female", "male", "non-binary"];

/// Uniformly selects six of the sixteen MBTI codes (8,008 combinations),
/// returned sorted for a canonical representation.
pub fn sample_mbti(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut indices = rand::seq::index::sample(rng, MBTI_TYPES.len(), 6).into_vec();
    indices.sort_unstable();
    indices
        .into_iter()
        .map(|i| MBTI_TYPES[i].to_string())
        .collect()
}

/// Samples profile attributes from the built-in pools, then asks the model
/// to blend the six MBTI types into one trait paragraph.
pub fn sample_profile(
    rng: &mut ChaCha8Rng,
    gateway: &Gateway,
) -> Result<UserProfile, SynthesisError> {
    let mbti = sample_mbti(rng);
    let name = format!(
        "{} {}",
        FIRST_NAMES.choose(rng).expect("non-empty"),
        LAST_NAMES.choose(rng).expect("non-empty")
    );
    let age = rng.gen_range(18..=75);
    let gender = GENDERS.choose(rng).expect("non-empty").to_string();
    let location = LOCATIONS.choose(rng).expect("non-empty").to_string();
    let profession = PROFESSIONS.choose(rng).expect("non-empty").to_string();
    let personality = gateway.chat(CallKind::Synthesis, &prompts::profile_personality(&mbti))?;
    Ok(UserProfile {
        name,
        age,
        gender,
        location,
        profession,
        personality: personality.trim().to_string(),
        mbti_combination: mbti,
    })
}

/// Builds parents, a partner, friends, and acquaintances around the user,
/// honoring the minimum parent age gap.
pub fn sample_relationships(
    rng: &mut ChaCha8Rng,
    profile: &UserProfile,
    min_parent_gap: u32,
) -> RelationshipGraph {
    let mut persons = Vec::new();
    let pick_name = |rng: &mut ChaCha8Rng| -> String {
        FIRST_NAMES.choose(rng).expect("non-empty").to_string()
    };
    for _ in 0..2 {
        persons.push(RelatedPerson {
            name: pick_name(rng),
            relation: Relation::Parent,
            age: profile.age + min_parent_gap + rng.gen_range(3..=15),
        });
    }
    persons.push(RelatedPerson {
        name: pick_name(rng),
        relation: Relation::Partner,
        age: profile.age.saturating_sub(4) + rng.gen_range(0..=8),
    });
    if profile.age >= 35 && rng.gen_bool(0.5) {
        persons.push(RelatedPerson {
            name: pick_name(rng),
            relation: Relation::Child,
            age: rng.gen_range(1..=profile.age - min_parent_gap),
        });
    }
    for _ in 0..rng.gen_range(2..=4) {
        persons.push(RelatedPerson {
            name: pick_name(rng),
            relation: Relation::Friend,
            age: profile.age.saturating_sub(8) + rng.gen_range(0..=16),
        });
    }
    for _ in 0..rng.gen_range(2..=4) {
        persons.push(RelatedPerson {
            name: pick_name(rng),
            relation: Relation::Acquaintance,
            age: rng.gen_range(18..=70),
        });
    }
    RelationshipGraph { persons }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::MockScript;
    use rand::SeedableRng;
    use std::time::Duration;

    fn gw() -> Gateway {
        let script = MockScript::builder()
            .catch_all("steady, methodical, and curious")
            .build()
            .unwrap();
        Gateway::new(Box::new(script.into_provider()), "m").with_retries(0, Duration::ZERO)
    }

    #[test]
    fn fixed_seed_gives_identical_mbti_set() {
        let a = sample_mbti(&mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_mbti(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn different_seeds_can_differ() {
        let sets: std::collections::HashSet<Vec<String>> = (0..20)
            .map(|s| sample_mbti(&mut ChaCha8Rng::seed_from_u64(s)))
            .collect();
        assert!(sets.len() > 1);
    }

    #[test]
    fn combination_space_has_8008_elements() {
        // Exhaustive enumeration of 6-subsets of a 16-element set.
        fn count_subsets(start: usize, remaining: usize, total: usize) -> usize {
            if remaining == 0 {
                return 1;
            }
            (start..=total - remaining)
                .map(|i| count_subsets(i + 1, remaining - 1, total))
                .sum()
        }
        assert_eq!(count_subsets(0, 6, 16), 8_008);
    }

    #[test]
    fn profile_is_plausible_and_deterministic() {
        let gw = gw();
        let p1 = sample_profile(&mut ChaCha8Rng::seed_from_u64(1), &gw).unwrap();
        let p2 = sample_profile(&mut ChaCha8Rng::seed_from_u64(1), &gw).unwrap();
        assert_eq!(p1, p2);
        assert!(p1.age >= 13 && p1.age <= 100);
        assert_eq!(p1.mbti_combination.len(), 6);
        assert!(!p1.personality.is_empty());
    }

    #[test]
    fn relationships_honor_parent_gap() {
        let gw = gw();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let profile = sample_profile(&mut rng, &gw).unwrap();
            let graph = sample_relationships(&mut rng, &profile, 15);
            assert!(graph.is_plausible(profile.age, 15));
            assert!(
                graph
                    .persons
                    .iter()
                    .filter(|p| p.relation == Relation::Parent)
                    .count()
                    == 2
            );
        }
    }
}
