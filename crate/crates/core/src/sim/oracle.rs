//! Exhaustive peer matcher used to cross-check `recommend_peers`, and a
//! random cohort generator to feed it.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{AvailabilityVector, KuId, Role, UserId, SLOTS_PER_WEEK};
use crate::peers::{CompetencyPreference, MatchParams, PeerCohort, PeerProfile, PeerRecommendation};

fn bools(z: &Option<AvailabilityVector>) -> [bool; SLOTS_PER_WEEK] {
    let mut out = [false; SLOTS_PER_WEEK];
    if let Some(z) = z {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = z.get(j);
        }
    }
    out
}

fn pair_allowed(r: Role, r2: Role, a: f64, b: f64, tau: f64) -> bool {
    matches!(
        (r, r2, a > b, a < b, (a - b).abs() <= tau),
        (Role::ProvideSupport, Role::SeekSupport, true, _, _)
            | (Role::SeekSupport, Role::ProvideSupport, _, true, _)
            | (Role::FindPartner, Role::FindPartner, _, _, true)
    )
}

fn side(r: Role, mine: f64, theirs: f64, pref: &CompetencyPreference, normalized: f64, width: f64) -> f64 {
    let (gap, eps) = match r {
        Role::ProvideSupport => (mine - theirs, pref.provide),
        Role::SeekSupport => (theirs - mine, pref.seek),
        Role::FindPartner => ((mine - theirs).abs(), 0.0),
    };
    (-((gap - eps).powi(2)) / (2.0 * width * width)).exp() * normalized
}

/// Enumerates every (other user, topic, role pair) for `user` and ranks the
/// per-user maxima.
pub fn brute_force_recommendations(cohort: &PeerCohort, user: &UserId, k: usize) -> Vec<PeerRecommendation> {
    let params = cohort.params;
    let Some(me) = cohort.profile(user) else { return Vec::new() };
    let za = bools(&me.availability);
    let mut per_user: BTreeMap<UserId, PeerRecommendation> = BTreeMap::new();
    for them in cohort.profiles() {
        if them.user == *user {
            continue;
        }
        let zb = bools(&them.availability);
        let common: Vec<usize> = (0..SLOTS_PER_WEEK).filter(|&j| za[j] && zb[j]).collect();
        if common.is_empty() {
            continue;
        }
        let na = za.iter().filter(|b| **b).count();
        let nb = zb.iter().filter(|b| **b).count();
        let normalized = common.len() as f64 / na.min(nb).max(1) as f64;
        let mut candidates: Vec<(KuId, Role, Role, f64)> = Vec::new();
        let mut kus: Vec<KuId> = me.requests.iter().map(|(k, _)| *k).collect();
        kus.sort();
        kus.dedup();
        for ku in kus {
            for r in Role::ALL {
                for r2 in Role::ALL {
                    if !me.requests.contains(&(ku, r)) || !them.requests.contains(&(ku, r2)) {
                        continue;
                    }
                    let (a, b) = (me.state(ku), them.state(ku));
                    if !pair_allowed(r, r2, a, b, params.tau) || !pair_allowed(r2, r, b, a, params.tau) {
                        continue;
                    }
                    let x = side(r, a, b, &me.preference, normalized, params.kernel_width);
                    let y = side(r2, b, a, &them.preference, normalized, params.kernel_width);
                    let psi = if x == 0.0 || y == 0.0 { 0.0 } else { 2.0 * x * y / (x + y) };
                    candidates.push((ku, r, r2, psi));
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let best = candidates.iter().map(|c| c.3).fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<&(KuId, Role, Role, f64)> = candidates.iter().filter(|c| c.3 >= best - 1e-9).collect();
        let mut matched: Vec<KuId> = winners.iter().map(|c| c.0).collect();
        matched.dedup();
        per_user.insert(
            them.user.clone(),
            PeerRecommendation {
                other_user: them.user.clone(),
                score: best,
                matched_kus: matched,
                suggested_slot: common[0],
                direction: (winners[0].1, winners[0].2),
            },
        );
    }
    let mut out: Vec<PeerRecommendation> = per_user.into_values().collect();
    // Insertion sort keeps equal scores in ascending user order.
    for i in 1..out.len() {
        let mut j = i;
        while j > 0 && out[j - 1].score < out[j].score {
            out.swap(j - 1, j);
            j -= 1;
        }
    }
    out.truncate(k);
    out
}

/// Post-hoc checks on one recommendation list. Returns the number of
/// violated constraints.
pub fn constraint_violations(cohort: &PeerCohort, user: &UserId, recs: &[PeerRecommendation]) -> usize {
    let Some(me) = cohort.profile(user) else { return recs.len() };
    let tau = cohort.params.tau;
    let mut bad = 0;
    for rec in recs {
        let Some(them) = cohort.profile(&rec.other_user) else {
            bad += 1;
            continue;
        };
        if them.user == me.user || rec.matched_kus.is_empty() {
            bad += 1;
        }
        let slot_ok = matches!((me.availability, them.availability), (Some(a), Some(b)) if a.get(rec.suggested_slot) && b.get(rec.suggested_slot));
        if !slot_ok {
            bad += 1;
        }
        for ku in &rec.matched_kus {
            let ok = Role::ALL.iter().any(|&r| {
                me.requests.contains(&(*ku, r))
                    && them.requests.contains(&(*ku, r.complement()))
                    && crate::peers::eligible(r, r.complement(), me.state(*ku), them.state(*ku), tau)
            });
            if !ok {
                bad += 1;
            }
        }
    }
    bad
}

/// Provide requests held without the Blue band.
pub fn provide_violations(cohort: &PeerCohort) -> usize {
    cohort
        .profiles()
        .flat_map(|p| p.requests.iter().map(move |(ku, r)| (p, *ku, *r)))
        .filter(|(p, ku, r)| *r == Role::ProvideSupport && p.state(*ku) < cohort.params.provide_threshold)
        .count()
}

/// Random cohort of `n` users over `l` topics. States sit on a coarse grid
/// so exact score ties occur.
pub fn random_peer_cohort(rng: &mut ChaCha8Rng, n: usize, l: u32) -> PeerCohort {
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let profiles: Vec<PeerProfile> = (0..n)
        .map(|i| {
            let availability = if rng.random_bool(0.1) {
                None
            } else {
                let mut z = AvailabilityVector::empty();
                let base = rng.random_range(0..SLOTS_PER_WEEK);
                for _ in 0..rng.random_range(1..20) {
                    z.set((base + rng.random_range(0..24)) % SLOTS_PER_WEEK, true);
                }
                Some(z)
            };
            let mut preference = CompetencyPreference::default();
            if rng.random_bool(0.3) {
                preference.provide = *grid[..8].choose(rng).expect("non-empty");
                preference.seek = *grid[..8].choose(rng).expect("non-empty");
            }
            let states = (1..=l).map(|ku| (KuId(ku), *grid.choose(rng).expect("non-empty"))).collect();
            let requests = (0..rng.random_range(0..5))
                .map(|_| (KuId(rng.random_range(1..=l)), *Role::ALL.choose(rng).expect("three roles")))
                .collect();
            PeerProfile { user: UserId::new(format!("u{i:02}")), availability, preference, requests, states }
        })
        .collect();
    PeerCohort::new(profiles, MatchParams::default())
}
