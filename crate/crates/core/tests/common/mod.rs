#![allow(dead_code)]

use ilrec::data::{synth_generate, Dataset, FeatureStore, FeatureType, SyntheticData, SyntheticSpec};
use ilrec::error::Result;
use ilrec::nn::graph::{Graph, Var};
use ilrec::nn::{BackboneConfig, Bound, Group, Mat, Model, ModelConfig, Trainable};
use ilrec::prompt::{representations, vocabulary_for, RisaTemplateSet, Vocabulary};
use rand::seq::index;
use rand::Rng;

pub struct World {
    pub data: SyntheticData,
    pub dataset: Dataset,
    pub templates: RisaTemplateSet,
    pub vocab: Vocabulary,
}

pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_users: 40,
        n_items: 30,
        mean_seq_len: 6.0,
        max_seq_len: 8,
        description_tokens: 24,
        ..SyntheticSpec::default()
    }
}

pub fn world(spec: &SyntheticSpec) -> World {
    let data = synth_generate(spec).unwrap();
    let dataset = Dataset::prepare(&data.records, data.items.clone(), 3).unwrap();
    let templates = RisaTemplateSet::builtin();
    let vocab = vocabulary_for(&dataset.catalog, &templates, 4096);
    World {
        data,
        dataset,
        templates,
        vocab,
    }
}

pub fn tiny_model(vocab: usize, store: &FeatureStore, d: usize, heads: usize) -> Model {
    let types = [FeatureType::Img, FeatureType::Cf, FeatureType::Text];
    Model::init(ModelConfig {
        backbone: BackboneConfig {
            vocab_size: vocab,
            d_model: d,
            n_layers: 1,
            n_heads: heads,
            d_ff: 2 * d,
            max_context: 512,
            trainable: true,
        },
        d_visual: store.dim(FeatureType::Img).unwrap(),
        adaptor_hidden: 24,
        d_shared: 8,
        item_dims: types.iter().map(|&t| (t, store.dim(t).unwrap())).collect(),
        seed: 11,
    })
    .unwrap()
}

/// Scales every parameter tensor away from the small init so that the
/// finite-difference signal is well above rounding noise.
pub fn spread(model: &mut Model, rng: &mut impl Rng) {
    for i in 0..model.params.len() {
        let group = model.params.get(i).group;
        let name = model.params.get(i).name.clone();
        let m = model.params.value_mut(i);
        if name.ends_with(".g") {
            for v in m.data_mut() {
                *v = 1.0 + rng.gen_range(-0.3..0.3);
            }
        } else {
            let s = if group == Group::Backbone { 0.4 } else { 0.3 };
            for v in m.data_mut() {
                *v = rng.gen_range(-s..s);
            }
        }
    }
}

pub struct GradCheck {
    pub group: Group,
    pub checked: usize,
    pub max_rel: f64,
}

/// Central differences on `coords` random coordinates per group against the
/// reverse-mode gradient. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(model: &Model, loss: F, coords: usize, h: f64, floor: f64, rng: &mut impl Rng) -> Vec<GradCheck>
where
    F: for<'g> Fn(&Bound<'g>, &mut Graph<'g>) -> Result<Var>,
{
    let (_, grads) = model.gradients(Trainable::all(), &loss).unwrap();
    let value = |m: &Model| -> f64 {
        let b = m.bind(Trainable::none());
        let mut g = Graph::new();
        let l = loss(&b, &mut g).unwrap();
        g.scalar(l)
    };
    let mut out = Vec::new();
    for group in Group::ALL {
        let mut slots: Vec<(usize, usize)> = Vec::new();
        for (i, p) in model.params.iter().enumerate() {
            if p.group == group {
                slots.extend((0..p.value.data().len()).map(|k| (i, k)));
            }
        }
        let picks = index::sample(rng, slots.len(), coords.min(slots.len()));
        let mut max_rel: f64 = 0.0;
        for pi in picks.iter() {
            let (i, k) = slots[pi];
            let mut plus = model.clone();
            plus.params.value_mut(i).data_mut()[k] += h;
            let mut minus = model.clone();
            minus.params.value_mut(i).data_mut()[k] -= h;
            let num = (value(&plus) - value(&minus)) / (2.0 * h);
            let ana = grads.get(&i).map_or(0.0, |g: &Mat| g.data()[k]);
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(floor);
            max_rel = max_rel.max(rel);
        }
        out.push(GradCheck {
            group,
            checked: picks.len(),
            max_rel,
        });
    }
    out
}

pub fn mode(name: &str) -> std::sync::Arc<dyn ilrec::prompt::ItemRepresentation> {
    representations().get(name).unwrap()
}
