use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{BoxDof, TrackerConfig};
use super::loss::{loss_total, FrameTarget, LossBreakdown};
use super::memory::view_from_parts;
use super::model::{backbone, forward_search, init_params, region_grid};
use super::track::AnnotatedSource;
use crate::error::{invalid, Error, Result};
use crate::geom::{contains, crop_points, Box9DoF};
use crate::math::Vec3;
use crate::nn::{Adam, Binding, Graph, ParamStore, Var};

/// A memory frame of a training tuple: crop in world coordinates and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryFrame {
    pub points: Vec<Vec3>,
    pub crop_center: Vec3,
    pub gt: Box9DoF,
}

/// Memory frames, search crop and ground truth for one supervised step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTuple {
    pub memory: Vec<MemoryFrame>,
    /// Search crop in world coordinates.
    pub search: Vec<Vec3>,
    /// Box the search region was cropped around (plays the previous prediction).
    pub reference: Box9DoF,
    pub gt: Box9DoF,
}

/// Builds the loss of one tuple; memory masks are teacher-forced from ground truth.
pub fn tuple_loss(g: &mut Graph, p: &Binding, cfg: &TrackerConfig, t: &TrainingTuple) -> Result<(Var, LossBreakdown)> {
    let mut encoded = Vec::with_capacity(t.memory.len());
    for m in &t.memory {
        let rel: Vec<Vec3> = m.points.iter().map(|q| q - m.crop_center).collect();
        let enc = backbone(g, p, cfg, &rel)?;
        let world: Vec<Vec3> = enc.coords.iter().map(|c| c + m.crop_center).collect();
        let mask: Vec<f64> = world.iter().map(|c| f64::from(u8::from(contains(&m.gt, c)))).collect();
        encoded.push((enc.features, world, mask));
    }
    let parts: Vec<(Var, &[Vec3], &[f64])> = encoded.iter().map(|e| (e.0, e.1.as_slice(), e.2.as_slice())).collect();
    let center = t.reference.center();
    let mem = view_from_parts(g, &parts, &center)?;
    let rel: Vec<Vec3> = t.search.iter().map(|q| q - center).collect();
    let region = region_grid(cfg, &t.reference)?;
    let fwd = forward_search(g, p, cfg, &rel, &mem, &region)?;
    loss_total(g, cfg, &fwd, &FrameTarget::new(&t.gt, &t.reference)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleOutcome {
    pub grads: BTreeMap<String, Vec<f64>>,
    pub loss: LossBreakdown,
}

pub fn tuple_gradients(params: &ParamStore, cfg: &TrackerConfig, t: &TrainingTuple) -> Result<TupleOutcome> {
    let mut g = Graph::new();
    let p = params.bind(&mut g)?;
    let (loss, parts) = tuple_loss(&mut g, &p, cfg, t)?;
    g.backward(loss)?;
    Ok(TupleOutcome { grads: p.grads(&g), loss: parts })
}

/// Evaluates the tuples of a batch; results must come back in input order.
pub trait BatchRunner {
    fn run(&self, params: &ParamStore, cfg: &TrackerConfig, batch: &[TrainingTuple]) -> Vec<Result<TupleOutcome>>;
}

pub struct SerialRunner;

impl BatchRunner for SerialRunner {
    fn run(&self, params: &ParamStore, cfg: &TrackerConfig, batch: &[TrainingTuple]) -> Vec<Result<TupleOutcome>> {
        batch.iter().map(|t| tuple_gradients(params, cfg, t)).collect()
    }
}

fn jittered(b: &Box9DoF, cfg: &TrackerConfig, rng: &mut ChaCha8Rng) -> Result<Box9DoF> {
    let mut draw = |sigma: f64| -> Result<Vec3> {
        if sigma == 0.0 {
            return Ok(Vec3::zeros());
        }
        let n = Normal::new(0.0, sigma).map_err(|e| invalid!("{e}"))?;
        Ok(Vec3::from_fn(|_, _| n.sample(rng)))
    };
    let dc = draw(cfg.train_jitter)?;
    let mut da = draw(cfg.train_angle_jitter)?;
    if cfg.box_dof == BoxDof::Seven {
        da.y = 0.0;
        da.z = 0.0;
    }
    let ds = draw(cfg.train_size_jitter)?;
    let size = b.size().component_mul(&ds.map(|v| (1.0 + v).max(0.5)));
    Box9DoF::new(b.center() + dc, size, b.angles() + da)
}

/// Draws `tuples_per_sequence` tuples from each sequence.
///
/// The search frame is any annotated frame after the first annotated one; memory holds
/// up to K earlier annotated frames. Every crop is taken around the previous annotated
/// box with Gaussian jitter on center, angles and size (the first frame uses its own box). Tuples whose
/// crops come out empty are dropped.
pub fn sample_tuples<S: AnnotatedSource>(seqs: &[S], cfg: &TrackerConfig, rng: &mut ChaCha8Rng) -> Result<Vec<TrainingTuple>> {
    let mut out = Vec::new();
    for seq in seqs {
        let present: Vec<(usize, Box9DoF)> =
            (0..seq.num_frames()).filter_map(|f| seq.annotation(f).map(|b| (f, b))).collect();
        if present.len() < 2 {
            continue;
        }
        for _ in 0..cfg.tuples_per_sequence {
            let s = rng.random_range(1..present.len());
            let (frame, gt) = present[s];
            let reference = jittered(&present[s - 1].1, cfg, rng)?;
            let (crop, _) = crop_points(&seq.cloud(frame)?, &reference, cfg.search_scale)?;
            if crop.is_empty() {
                continue;
            }
            let mut memory = Vec::new();
            for m in s.saturating_sub(cfg.memory_size)..s {
                let (mf, mgt) = present[m];
                let crop_box = if m == 0 { mgt } else { jittered(&present[m - 1].1, cfg, rng)? };
                let (mc, _) = crop_points(&seq.cloud(mf)?, &crop_box, cfg.search_scale)?;
                if !mc.is_empty() {
                    memory.push(MemoryFrame { points: mc.into_points(), crop_center: crop_box.center(), gt: mgt });
                }
            }
            if memory.is_empty() {
                continue;
            }
            out.push(TrainingTuple { memory, search: crop.into_points(), reference, gt });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub tuples: usize,
    /// Mean over the epoch's tuples, measured before each batch's update.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub log: Vec<EpochLog>,
}

/// Averages the batch gradients and applies one Adam step; returns the summed batch loss.
pub fn apply_batch(
    params: &mut ParamStore,
    adam: &mut Adam,
    outcomes: Vec<Result<TupleOutcome>>,
) -> Result<(usize, LossBreakdown)> {
    let mut sum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut loss = LossBreakdown::default();
    let mut n = 0;
    for o in outcomes {
        let o = o?;
        for (name, grad) in o.grads {
            match sum.get_mut(&name) {
                Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
                None => {
                    sum.insert(name, grad);
                }
            }
        }
        loss.accumulate(&o.loss);
        n += 1;
    }
    if n == 0 {
        return Ok((0, loss));
    }
    let inv = 1.0 / n as f64;
    sum.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= inv));
    adam.step(params, &sum)?;
    Ok((n, loss))
}

/// Trains from scratch; deterministic in `seed` regardless of the runner.
pub fn train<S: AnnotatedSource, R: BatchRunner + ?Sized>(
    seqs: &[S],
    cfg: &TrackerConfig,
    seed: u64,
    runner: &R,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if seqs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut params = init_params(cfg, seed)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a11_0000_0001);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut tuples = sample_tuples(seqs, cfg, &mut rng)?;
        if tuples.is_empty() {
            return Err(Error::InvalidArgument("training set yields no usable tuples".into()));
        }
        tuples.shuffle(&mut rng);
        let mut total = LossBreakdown::default();
        let mut count = 0;
        for batch in tuples.chunks(cfg.batch_size) {
            let outcomes = runner.run(&params, cfg, batch);
            let (n, loss) = apply_batch(&mut params, &mut adam, outcomes)?;
            total.accumulate(&loss);
            count += n;
        }
        let entry = EpochLog { epoch, tuples: count, loss: total.scaled(1.0 / count.max(1) as f64) };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}
