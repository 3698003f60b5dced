//! Rating buckets for competitive-programming problems.

use serde::Serialize;

/// Highest rating a bucket covers. Scores above it are rejected.
pub const MAX_SCORE: u32 = 5000;

/// Name used in reports for problems that carry no rating.
pub const UNRATED: &str = "unrated";

/// An inclusive rating range with a display name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DifficultyBucket {
    pub name: &'static str,
    pub lo: u32,
    pub hi: u32,
}

impl DifficultyBucket {
    const fn new(name: &'static str, lo: u32, hi: u32) -> Self {
        Self { name, lo, hi }
    }

    pub fn contains(&self, score: u32) -> bool {
        self.lo <= score && score <= self.hi
    }
}

/// The eleven CodeChef rating buckets, ordered by rating.
pub const BUCKETS: [DifficultyBucket; 11] = [
    DifficultyBucket::new("Beginner", 0, 999),
    DifficultyBucket::new("1* Beginner", 1000, 1199),
    DifficultyBucket::new("1* Advanced", 1200, 1399),
    DifficultyBucket::new("2* Beginner", 1400, 1499),
    DifficultyBucket::new("2* Advanced", 1500, 1599),
    DifficultyBucket::new("3* Beginner", 1600, 1699),
    DifficultyBucket::new("3* Advanced", 1700, 1799),
    DifficultyBucket::new("4*", 1800, 1999),
    DifficultyBucket::new("5*", 2000, 2199),
    DifficultyBucket::new("6*", 2200, 2499),
    DifficultyBucket::new("7*", 2500, MAX_SCORE),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("difficulty score {0} outside 0..={MAX_SCORE}")]
pub struct ScoreOutOfRange(pub u64);

pub fn bucket_for_score(score: u64) -> Result<&'static DifficultyBucket, ScoreOutOfRange> {
    if score > MAX_SCORE as u64 {
        return Err(ScoreOutOfRange(score));
    }
    let score = score as u32;
    // binary search over the ordered, gap-free table
    let idx = BUCKETS.partition_point(|b| b.hi < score);
    Ok(&BUCKETS[idx])
}

/// Bucket name for an optional score; unrated problems share one pseudo-bucket.
pub fn bucket_name(score: Option<u64>) -> Result<&'static str, ScoreOutOfRange> {
    match score {
        None => Ok(UNRATED),
        Some(s) => bucket_for_score(s).map(|b| b.name),
    }
}
