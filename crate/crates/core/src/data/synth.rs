//! Planted-factor synthetic catalog.
//!
//! Every item has a latent vector `z`; users carry a preference vector and pick
//! their next item from a softmax over preference affinity, item popularity and
//! a same-category bonus. Image and joint-text features are two noisy linear
//! views of `z` sharing most of their map, so matched image/text pairs are far
//! more similar than shuffled ones. CF rows carry `z` plus a popularity channel,
//! with noise that grows as items get colder.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson, StandardNormal};

use crate::data::features::{FeatureStore, FeatureTable, FeatureType};
use crate::data::records::{InteractionRecord, ItemRecord};
use crate::data::sampling::stable_hash;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    pub noise: f64,
    pub mean_seq_len: f64,
    pub max_seq_len: usize,
    pub seed: u64,
    pub description_tokens: usize,
    pub attribute_tokens: usize,
    pub d_visual: usize,
    pub d_cf: usize,
    pub d_text: usize,
    pub n_categories: usize,
    /// Scale of the user-preference term in the next-item softmax.
    pub preference_strength: f64,
    /// Exponent of the rank-based popularity prior.
    pub popularity_skew: f64,
    /// Logit bonus for staying in the previous item's category.
    pub category_drift: f64,
    /// Share of the image map reused by the joint-text map.
    pub joint_overlap: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 400,
            n_items: 150,
            latent_dim: 8,
            noise: 0.1,
            mean_seq_len: 9.0,
            max_seq_len: 20,
            seed: 7,
            description_tokens: 160,
            attribute_tokens: 10,
            d_visual: 32,
            d_cf: 16,
            d_text: 24,
            n_categories: 8,
            preference_strength: 20.0,
            popularity_skew: 0.6,
            category_drift: 0.5,
            joint_overlap: 0.8,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_items", self.n_items),
            ("latent_dim", self.latent_dim),
            ("max_seq_len", self.max_seq_len),
            ("description_tokens", self.description_tokens),
            ("attribute_tokens", self.attribute_tokens),
            ("d_visual", self.d_visual),
            ("d_cf", self.d_cf),
            ("d_text", self.d_text),
            ("n_categories", self.n_categories),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synthetic {name} must be positive")));
            }
        }
        if self.attribute_tokens < 3 {
            return Err(Error::Config("attribute_tokens must be at least 3".into()));
        }
        if self.d_cf < 2 {
            return Err(Error::Config("d_cf must be at least 2".into()));
        }
        if !(self.noise >= 0.0) || !(self.mean_seq_len > 0.0) {
            return Err(Error::Config("noise must be >= 0 and mean_seq_len > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.joint_overlap) {
            return Err(Error::Config("joint_overlap must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<InteractionRecord>,
    pub items: Vec<ItemRecord>,
    pub features: FeatureStore,
}

const SIGNAL_WORDS_PER_POLE: usize = 6;
const FILLER_WORDS: usize = 80;
const BRANDS: usize = 20;
const MIN_SEQ_LEN: usize = 5;

struct Lexicon {
    /// `signal[dim][pole]` word pools; pole 0 is positive.
    signal: Vec<[Vec<String>; 2]>,
    filler: Vec<String>,
    brands: Vec<String>,
    categories: Vec<Vec<String>>,
    category_nouns: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    const ONSETS: [&str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr",
    ];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
    const CODAS: [&str; 6] = ["", "n", "r", "s", "x", "l"];
    loop {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        w.push_str(CODAS[rng.gen_range(0..CODAS.len())]);
        if used.insert(w.clone()) {
            return w;
        }
    }
}

impl Lexicon {
    fn new(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut used = HashSet::new();
        let signal = (0..spec.latent_dim)
            .map(|_| {
                [
                    (0..SIGNAL_WORDS_PER_POLE).map(|_| pseudo_word(rng, &mut used)).collect(),
                    (0..SIGNAL_WORDS_PER_POLE).map(|_| pseudo_word(rng, &mut used)).collect(),
                ]
            })
            .collect();
        let filler = (0..FILLER_WORDS).map(|_| pseudo_word(rng, &mut used)).collect();
        let brands = (0..BRANDS).map(|_| pseudo_word(rng, &mut used)).collect();
        // Brand takes two tokens (name + suffix); the category path fills the rest.
        let path_len = spec.attribute_tokens - 2;
        let categories = (0..spec.n_categories)
            .map(|_| (0..path_len).map(|_| pseudo_word(rng, &mut used)).collect())
            .collect();
        let category_nouns = (0..spec.n_categories).map(|_| pseudo_word(rng, &mut used)).collect();
        Self {
            signal,
            filler,
            brands,
            categories,
            category_nouns,
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Row-major `rows x cols` Gaussian map scaled by `1/sqrt(cols)`.
fn gaussian_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    normal_vec(rng, rows * cols).into_iter().map(|x| x * scale).collect()
}

fn apply(map: &[f64], rows: usize, z: &[f64]) -> Vec<f64> {
    let cols = z.len();
    (0..rows)
        .map(|r| map[r * cols..(r + 1) * cols].iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic pseudo-embedding of a word, independent of the catalog seed.
fn word_vector(word: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[b"word-vector", word.as_bytes()]));
    normal_vec(&mut rng, dim)
}

/// Bag-of-words text embedding: normalized sum of per-word pseudo-embeddings.
pub fn text_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut acc = vec![0.0; dim];
    for w in text.split_whitespace() {
        for (a, b) in acc.iter_mut().zip(word_vector(&w.to_lowercase(), dim)) {
            *a += b;
        }
    }
    to_f32(&unit(acc))
}

pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lex = Lexicon::new(spec, &mut rng);
    let l = spec.latent_dim;

    let latents: Vec<Vec<f64>> = (0..spec.n_items).map(|_| unit(normal_vec(&mut rng, l))).collect();
    let centers: Vec<Vec<f64>> = (0..spec.n_categories).map(|_| normal_vec(&mut rng, l)).collect();
    let category: Vec<usize> = latents
        .iter()
        .map(|z| {
            (0..spec.n_categories)
                .max_by(|&a, &b| dot(z, &centers[a]).total_cmp(&dot(z, &centers[b])))
                .unwrap_or(0)
        })
        .collect();

    // Popularity prior from a random rank permutation; percentile 1.0 = most popular.
    let mut order: Vec<usize> = (0..spec.n_items).collect();
    order.shuffle(&mut rng);
    let mut pop_rank = vec![0usize; spec.n_items];
    for (rank, &item) in order.iter().enumerate() {
        pop_rank[item] = rank + 1;
    }
    let pop_bias: Vec<f64> = pop_rank
        .iter()
        .map(|&r| -spec.popularity_skew * (r as f64).ln())
        .collect();
    let pop_pct: Vec<f64> = pop_rank
        .iter()
        .map(|&r| {
            if spec.n_items == 1 {
                1.0
            } else {
                1.0 - (r - 1) as f64 / (spec.n_items - 1) as f64
            }
        })
        .collect();

    let item_ids: Vec<String> = (0..spec.n_items).map(|i| format!("item{i:04}")).collect();

    // Text.
    let mut items = Vec::with_capacity(spec.n_items);
    for (i, z) in latents.iter().enumerate() {
        let mut dims: Vec<usize> = (0..l).collect();
        dims.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()));
        let pole = |d: usize| usize::from(z[d] < 0.0);
        let title_words = [
            lex.signal[dims[0]][pole(dims[0])][rng.gen_range(0..SIGNAL_WORDS_PER_POLE)].clone(),
            lex.signal[dims[1 % l]][pole(dims[1 % l])][rng.gen_range(0..SIGNAL_WORDS_PER_POLE)].clone(),
            lex.category_nouns[category[i]].clone(),
        ];
        let brand_idx = (category[i] * 3 + rng.gen_range(0..3)) % BRANDS;
        let weights: Vec<f64> = z.iter().map(|x| x * x + 1e-9).collect();
        let dim_pick = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
        let jitter = (spec.description_tokens / 32).min(5) as i64;
        let len = (spec.description_tokens as i64 + rng.gen_range(-jitter..=jitter)).max(1) as usize;
        let description: Vec<String> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.45) {
                    let d = dim_pick.sample(&mut rng);
                    lex.signal[d][pole(d)][rng.gen_range(0..SIGNAL_WORDS_PER_POLE)].clone()
                } else {
                    lex.filler[rng.gen_range(0..FILLER_WORDS)].clone()
                }
            })
            .collect();
        items.push(ItemRecord {
            item_id: item_ids[i].clone(),
            title: title_words.join(" "),
            brand: format!("{} co", lex.brands[brand_idx]),
            category: lex.categories[category[i]].join(" "),
            description: description.join(" "),
            image_ref: Some(format!("images/{}.jpg", item_ids[i])),
            has_image: true,
        });
    }

    // Features.
    let a_img = gaussian_map(&mut rng, spec.d_visual, l);
    let b_txt = gaussian_map(&mut rng, spec.d_visual, l);
    let rho = spec.joint_overlap;
    let a_txt: Vec<f64> = a_img
        .iter()
        .zip(&b_txt)
        .map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b)
        .collect();
    let cf_latent_dim = spec.d_cf - 1;
    let a_cf = gaussian_map(&mut rng, cf_latent_dim, l);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut img_rows = Vec::new();
    let mut jt_rows = Vec::new();
    let mut cf_rows = Vec::new();
    let mut text_rows = Vec::new();
    for (i, z) in latents.iter().enumerate() {
        let mut img = apply(&a_img, spec.d_visual, z);
        img.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
        let mut jt = apply(&a_txt, spec.d_visual, z);
        jt.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
        // Cold items get a much noisier collaborative signal.
        let cold = 1.0 - pop_pct[i];
        let cf_noise = spec.noise + 0.8 * cold * cold;
        let mut cf: Vec<f64> = apply(&a_cf, cf_latent_dim, z)
            .into_iter()
            .map(|x| x + cf_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        cf = unit(cf);
        cf.push(1.2 * pop_pct[i] - 0.6);
        img_rows.push((item_ids[i].clone(), to_f32(&unit(img))));
        jt_rows.push((item_ids[i].clone(), to_f32(&unit(jt))));
        cf_rows.push((item_ids[i].clone(), to_f32(&unit(cf))));
        text_rows.push((item_ids[i].clone(), text_embedding(&items[i].description, spec.d_text)));
    }
    let mut features = FeatureStore::new();
    features.insert(FeatureTable::new(FeatureType::Img, spec.d_visual, img_rows)?)?;
    features.insert(FeatureTable::new(FeatureType::Cf, spec.d_cf, cf_rows)?)?;
    features.insert(FeatureTable::new(FeatureType::Text, spec.d_text, text_rows)?)?;
    features.insert(FeatureTable::new(FeatureType::JointText, spec.d_visual, jt_rows)?)?;

    // Interactions.
    let extra = (spec.mean_seq_len - MIN_SEQ_LEN as f64).max(0.01);
    let length_dist = Poisson::new(extra).map_err(|e| Error::invalid(e.to_string()))?;
    let mut records = Vec::new();
    for u in 0..spec.n_users {
        let user_id = format!("user{u:04}");
        let pref: Vec<f64> = unit(normal_vec(&mut rng, l));
        let len = (MIN_SEQ_LEN + length_dist.sample(&mut rng) as usize).min(spec.max_seq_len.max(1));
        let mut consumed = vec![false; spec.n_items];
        let mut n_consumed = 0;
        let mut prev_cat: Option<usize> = None;
        let mut t: u64 = 1_600_000_000 + rng.gen_range(0..1_000_000);
        for _ in 0..len {
            if n_consumed == spec.n_items {
                consumed.iter_mut().for_each(|c| *c = false);
                n_consumed = 0;
            }
            let logits: Vec<f64> = (0..spec.n_items)
                .map(|i| {
                    if consumed[i] {
                        f64::NEG_INFINITY
                    } else {
                        let drift = if prev_cat == Some(category[i]) { spec.category_drift } else { 0.0 };
                        spec.preference_strength * dot(&pref, &latents[i]) + pop_bias[i] + drift
                    }
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
            let pick = WeightedIndex::new(&weights)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(&mut rng);
            consumed[pick] = true;
            n_consumed += 1;
            prev_cat = Some(category[pick]);
            t += rng.gen_range(1..86_400);
            records.push(InteractionRecord::new(user_id.clone(), item_ids[pick].clone(), t));
        }
    }

    Ok(SyntheticData {
        records,
        items,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sequence::{build_sequences, k_core_filter};

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        d / (na * nb)
    }

    fn small_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_users: 30,
            n_items: 50,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = synth_generate(&small_spec(7)).unwrap();
        let b = synth_generate(&small_spec(7)).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&small_spec(8)).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn noiseless_pairs_beat_every_shuffle() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..small_spec(3)
        };
        let data = synth_generate(&spec).unwrap();
        let img = data.features.get(FeatureType::Img).unwrap();
        let jt = data.features.get(FeatureType::JointText).unwrap();
        let n = img.len();
        let matched: f64 = (0..n).map(|r| cosine(img.row_at(r), jt.row_at(r))).sum::<f64>() / n as f64;
        for shift in 1..n {
            let shuffled: f64 =
                (0..n).map(|r| cosine(img.row_at(r), jt.row_at((r + shift) % n))).sum::<f64>() / n as f64;
            assert!(matched > shuffled, "shift {shift}: {matched} vs {shuffled}");
        }
    }

    #[test]
    fn single_item_catalog_repeats() {
        let spec = SyntheticSpec {
            n_items: 1,
            n_users: 5,
            ..Default::default()
        };
        let data = synth_generate(&spec).unwrap();
        assert!(data.records.iter().all(|r| r.item_id == "item0000"));
        let kept = k_core_filter(&data.records, 5);
        for s in build_sequences(&kept) {
            assert!(s.items.len() >= 5);
        }
    }

    #[test]
    fn feature_rows_are_unit_and_present() {
        let data = synth_generate(&small_spec(1)).unwrap();
        for kind in FeatureType::ALL {
            let t = data.features.get(kind).unwrap();
            assert_eq!(t.len(), 50);
            for r in 0..t.len() {
                let n: f64 = t.row_at(r).iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-5, "{kind} row {r} norm {n}");
            }
        }
    }

    #[test]
    fn text_lengths_track_targets() {
        let data = synth_generate(&small_spec(2)).unwrap();
        for it in &data.items {
            let d = it.description.split_whitespace().count();
            assert!((155..=165).contains(&d), "{d}");
            assert_eq!(it.attribute_text().split_whitespace().count(), 10);
            assert_eq!(it.title.split_whitespace().count(), 3);
        }
    }
}
