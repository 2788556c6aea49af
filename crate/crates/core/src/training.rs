//! Alternating adversarial training: per batch, `d_steps_per_g_step` discriminator
//! updates followed by one generator update on the weighted total objective.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::config::TrainConfig;
use crate::data::ObservationWindow;
use crate::error::{Error, Result};
use crate::losses::{
    discriminator_loss_graph, generator_adv_loss_graph, kl_graph, total_loss_graph, variety_from_sq_errors,
};
use crate::model::{
    decode_graph, discriminate, draw_latent_noise, encode_batch, latent_graph, step_displacements, Branch, LvpMode,
    ModelParams, Sampling, SceneBatch,
};
use crate::optim::Adam;

/// Epoch means of the training losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub d_loss: f64,
    /// Adversarial part of the generator objective.
    pub g_loss: f64,
    pub variety: f64,
    /// Zero when the latent predictor is disabled.
    pub kl: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub d_updates: u64,
    pub g_updates: u64,
}

pub const LOG_HEADER: &str = "epoch,d_loss,g_loss,variety,kl,wall_seconds";

impl TrainingLog {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{LOG_HEADER}")?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:.3}",
                r.epoch, r.d_loss, r.g_loss, r.variety, r.kl, r.wall_seconds
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Everything except wall-clock time, which is the only non-reproducible column.
    pub fn same_losses(&self, other: &TrainingLog) -> bool {
        self.d_updates == other.d_updates
            && self.g_updates == other.g_updates
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.d_loss.to_bits() == b.d_loss.to_bits()
                    && a.g_loss.to_bits() == b.g_loss.to_bits()
                    && a.variety.to_bits() == b.variety.to_bits()
                    && a.kl.to_bits() == b.kl.to_bits()
            })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GeneratorStep {
    pub adv: f64,
    pub variety: f64,
    pub kl: f64,
}

/// Training state that can be advanced one epoch at a time.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    windows: Vec<&'a ObservationWindow>,
    params: ModelParams,
    opt_g: Adam,
    opt_d: Adam,
    rng: ChaCha8Rng,
    log: TrainingLog,
}

impl<'a> Trainer<'a> {
    pub fn new(windows: &'a [ObservationWindow], cfg: &TrainConfig) -> Result<Self> {
        let params = ModelParams::new(&cfg.model, cfg.seed)?;
        Self::with_params(windows, cfg, params)
    }

    pub fn with_params(windows: &'a [ObservationWindow], cfg: &TrainConfig, params: ModelParams) -> Result<Self> {
        cfg.validate()?;
        if params.config != cfg.model {
            return Err(Error::Config("parameters were built for a different model config".into()));
        }
        if windows.is_empty() {
            return Err(Error::InvalidArgument("no training windows".into()));
        }
        let m = &cfg.model;
        for w in windows {
            if w.num_peds() == 0 || w.obs_len != m.obs_len || w.pred_len != m.pred_len || !w.has_future() {
                return Err(Error::Shape(format!(
                    "window {}@{} does not match obs_len={} pred_len={}",
                    w.scene_id, w.start_frame, m.obs_len, m.pred_len
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Self {
            opt_g: Adam::new(cfg.adam, &params.store, params.generator_ids()),
            opt_d: Adam::new(cfg.adam, &params.store, params.discriminator_ids()),
            cfg: cfg.clone(),
            windows: windows.iter().collect(),
            params,
            rng,
            log: TrainingLog::default(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn into_parts(self) -> (ModelParams, TrainingLog) {
        (self.params, self.log)
    }

    /// Shuffled groups of windows holding about `batch_size` pedestrians each.
    fn batches(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.windows.len()).collect();
        order.shuffle(&mut self.rng);
        let mut out = Vec::new();
        let mut cur: Vec<usize> = Vec::new();
        let mut peds = 0;
        for i in order {
            let p = self.windows[i].num_peds();
            if !cur.is_empty() && peds + p > self.cfg.batch_size {
                out.push(std::mem::take(&mut cur));
                peds = 0;
            }
            cur.push(i);
            peds += p;
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let start = Instant::now();
        let epoch = self.log.epochs.len() + 1;
        let (mut d_sum, mut d_n) = (0.0, 0usize);
        let (mut adv_sum, mut var_sum, mut kl_sum, mut g_n) = (0.0, 0.0, 0.0, 0usize);
        for idx in self.batches() {
            let ws: Vec<&ObservationWindow> = idx.iter().map(|&i| self.windows[i]).collect();
            let batch = SceneBatch::from_windows(&ws, &self.params, true)?;
            for _ in 0..self.cfg.d_steps_per_g_step {
                let d = self.discriminator_step(&batch)?;
                guard(d, epoch, "discriminator loss")?;
                d_sum += d;
                d_n += 1;
            }
            let gs = self.generator_step(&batch)?;
            guard(gs.adv, epoch, "generator adversarial loss")?;
            guard(gs.variety, epoch, "variety loss")?;
            guard(gs.kl, epoch, "KL loss")?;
            adv_sum += gs.adv;
            var_sum += gs.variety;
            kl_sum += gs.kl;
            g_n += 1;
        }
        if !self.params.store.all_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "parameters".into(),
            });
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        let rec = EpochRecord {
            epoch,
            d_loss: mean(d_sum, d_n),
            g_loss: mean(adv_sum, g_n),
            variety: mean(var_sum, g_n),
            kl: mean(kl_sum, g_n),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: d {:.4} g {:.4} variety {:.4} kl {:.4}",
            rec.d_loss,
            rec.g_loss,
            rec.variety,
            rec.kl
        );
        self.log.epochs.push(rec);
        Ok(rec)
    }

    /// Generator displacements for the future steps, as plain values.
    fn generate(&mut self, batch: &SceneBatch) -> Result<Vec<Array2<f64>>> {
        let params = &self.params;
        let mut g = Graph::new();
        let enc = encode_batch(&mut g, params, batch, &[Branch::GroundTruth])?;
        let ld = params.config.latent_dim_per_kind;
        let widths = vec![ld; enc.groundtruth.len()];
        let (eps, noise) = draw_latent_noise(&mut self.rng, batch.len(), &widths, params.config.z_dim(), Sampling::Random);
        let z = latent_graph(&mut g, &enc.groundtruth, &eps, noise);
        let steps = decode_graph(&mut g, params, enc.hidden, enc.pooled, z, &enc.last_displacement);
        Ok(steps.iter().map(|v| g.value(*v).clone()).collect())
    }

    pub(crate) fn discriminator_step(&mut self, batch: &SceneBatch) -> Result<f64> {
        let future = batch.future.as_ref().expect("training batches carry futures");
        let fake = self.generate(batch)?;
        let full = concatenate(Axis(1), &[batch.observed.view(), future.view()]).expect("equal rows");

        let mut g = Graph::new();
        let real: Vec<Var> = step_displacements(full.view()).into_iter().map(|s| g.constant(s)).collect();
        let fake: Vec<Var> = step_displacements(batch.observed.view())
            .into_iter()
            .chain(fake)
            .map(|s| g.constant(s))
            .collect();
        let params = &self.params;
        let sr = discriminate(&mut g, params, &real);
        let sf = discriminate(&mut g, params, &fake);
        let loss = discriminator_loss_graph(&mut g, sr, sf);
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Ok(value);
        }
        let grads = g.backward(loss);
        let (gs, _) = self.opt_d.collect_grads(&grads, &self.params.store, Some(self.cfg.grad_clip));
        self.opt_d.step(&mut self.params.store, &gs);
        self.log.d_updates += 1;
        Ok(value)
    }

    pub(crate) fn generator_step(&mut self, batch: &SceneBatch) -> Result<GeneratorStep> {
        let params = &self.params;
        let cfg = &params.config;
        let future = batch.future.as_ref().expect("training batches carry futures");
        let (n, m) = (batch.len(), self.cfg.loss_weights.variety_m);
        let mut g = Graph::new();
        let enc = encode_batch(&mut g, params, batch, &[Branch::Observed, Branch::GroundTruth])?;

        // Row s * n + i holds sample s of pedestrian i.
        let rep: Vec<usize> = (0..m).flat_map(|_| 0..n).collect();
        let hidden = g.gather_rows(enc.hidden, &rep);
        let pooled = g.gather_rows(enc.pooled, &rep);
        let gauss: Vec<(Var, Var)> = enc
            .groundtruth
            .iter()
            .map(|&(mu, sd)| (g.gather_rows(mu, &rep), g.gather_rows(sd, &rep)))
            .collect();
        let widths = vec![cfg.latent_dim_per_kind; gauss.len()];
        let draws: Vec<_> = (0..m)
            .map(|_| draw_latent_noise(&mut self.rng, n, &widths, cfg.z_dim(), Sampling::Random))
            .collect();
        let stack = |parts: Vec<Array2<f64>>| {
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            concatenate(Axis(0), &views).expect("equal widths")
        };
        let eps: Vec<Array2<f64>> = (0..widths.len())
            .map(|k| stack(draws.iter().map(|d| d.0[k].clone()).collect()))
            .collect();
        let noise = stack(draws.iter().map(|d| d.1.clone()).collect());
        let z = latent_graph(&mut g, &gauss, &eps, noise);
        let last_disp = enc.last_displacement.select(Axis(0), &rep);
        let steps = decode_graph(&mut g, params, hidden, pooled, z, &last_disp);

        let last = batch.last_positions();
        let mut cum: Option<Var> = None;
        let mut sq: Option<Var> = None;
        for (t, &d) in steps.iter().enumerate() {
            let c = match cum {
                Some(c) => g.add(c, d),
                None => d,
            };
            cum = Some(c);
            let offset = (&last - &future.slice(s![.., t, ..])).select(Axis(0), &rep);
            let offset = g.constant(offset);
            let diff = g.add(c, offset);
            let d2 = g.square(diff);
            let d2 = g.sum_cols(d2);
            sq = Some(match sq {
                Some(a) => g.add(a, d2),
                None => d2,
            });
        }
        let sq = g.reshape(sq.expect("pred_len >= 1"), m, n);
        let sq = g.transpose(sq);
        let variety = variety_from_sq_errors(&mut g, sq);

        let first: Vec<usize> = (0..n).collect();
        let mut traj: Vec<Var> = step_displacements(batch.observed.view())
            .into_iter()
            .map(|s| g.constant(s))
            .collect();
        for &d in &steps {
            traj.push(g.gather_rows(d, &first));
        }
        let scores = discriminate(&mut g, params, &traj);
        let adv = generator_adv_loss_graph(&mut g, scores);
        let kl = (cfg.lvp != LvpMode::None).then(|| kl_graph(&mut g, &enc.observed, &enc.groundtruth));
        let total = total_loss_graph(&mut g, adv, variety, kl, &self.cfg.loss_weights);

        let out = GeneratorStep {
            adv: g.scalar(adv),
            variety: g.scalar(variety),
            kl: kl.map_or(0.0, |k| g.scalar(k)),
        };
        if !g.scalar(total).is_finite() {
            return Ok(out);
        }
        let grads = g.backward(total);
        let (gs, _) = self.opt_g.collect_grads(&grads, &self.params.store, Some(self.cfg.grad_clip));
        self.opt_g.step(&mut self.params.store, &gs);
        self.log.g_updates += 1;
        Ok(out)
    }
}

fn guard(x: f64, epoch: usize, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            what: what.into(),
        })
    }
}

/// Trains from freshly initialized parameters for `cfg.epochs` epochs.
pub fn train(windows: &[ObservationWindow], cfg: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    let mut t = Trainer::new(windows, cfg)?;
    for _ in 0..cfg.epochs {
        t.run_epoch()?;
    }
    Ok(t.into_parts())
}
