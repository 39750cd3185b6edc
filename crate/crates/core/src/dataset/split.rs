use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, VideoRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    /// video id -> (class name, split)
    pub videos: BTreeMap<String, (String, Split)>,
}

impl SplitAssignment {
    pub fn split_of(&self, video_id: &str) -> Option<Split> {
        self.videos.get(video_id).map(|(_, s)| *s)
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.videos
            .iter()
            .filter(move |(_, (_, s))| *s == split)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, split: Split) -> usize {
        self.ids(split).count()
    }
}

/// Per-split counts for a class of `n` videos: 80/10/10 with
/// largest-remainder rounding; ties go to train, then val, then test.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let quotas = [8 * n, n, n];
    let mut sizes = quotas.map(|q| q / 10);
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&i| std::cmp::Reverse(quotas[i] % 10));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Per class (in class-index order) the video list is sorted, shuffled
/// with one seeded generator and sliced into train/val/test.
pub fn make_splits(records: &[VideoRecord], seed: u64) -> Result<SplitAssignment, DatasetError> {
    let mut by_class: BTreeMap<(usize, String), Vec<&str>> = BTreeMap::new();
    for r in records {
        by_class
            .entry((r.class_label.index, r.class_label.name.clone()))
            .or_default()
            .push(&r.video_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut videos = BTreeMap::new();
    for ((_, class), mut ids) in by_class {
        if ids.len() < 3 {
            return Err(DatasetError::TooFewVideos { class, count: ids.len() });
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let [train, val, _] = split_sizes(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            if videos.insert(id.to_string(), (class.clone(), split)).is_some() {
                return Err(DatasetError::DuplicateVideo(id.to_string()));
            }
        }
    }
    Ok(SplitAssignment { seed, videos })
}

/// Header `# seed=<seed>`, then `video_id<TAB>class<TAB>split` per video in
/// id order.
pub fn write_split_file(path: &Path, splits: &SplitAssignment) -> Result<(), DatasetError> {
    let mut out = format!("# seed={}\n", splits.seed);
    for (id, (class, split)) in &splits.videos {
        out.push_str(&format!("{id}\t{class}\t{split}\n"));
    }
    std::fs::write(path, out).map_err(|e| DatasetError::io(path, e))
}

pub fn read_split_file(path: &Path) -> Result<SplitAssignment, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let bad = |line: usize, msg: String| DatasetError::SplitFile {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let seed = lines
        .next()
        .and_then(|(_, l)| l.strip_prefix("# seed="))
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| bad(1, "expected header '# seed=<n>'".into()))?;
    let mut videos = BTreeMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, class, split] = fields[..] else {
            return Err(bad(i + 1, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let split = split.parse().map_err(|e| bad(i + 1, e))?;
        if videos.insert(id.to_string(), (class.to_string(), split)).is_some() {
            return Err(bad(i + 1, format!("duplicate video id {id:?}")));
        }
    }
    Ok(SplitAssignment { seed, videos })
}
