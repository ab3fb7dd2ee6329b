use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Fusion, ModelConfig, Streams};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::optim::Parameter;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvIdx {
    weight: usize,
    bias: usize,
}

/// Parameter indices of a gated attention block.
///
/// The block computes `M = sigmoid(expand(relu(reduce(x))))` with 1×1×1
/// convolutions `C → max(C/8, 1) → C`, and returns `x + x ⊙ M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionBlock {
    reduce: ConvIdx,
    expand: ConvIdx,
    channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Level {
    conv: ConvIdx,
    attention: AttentionBlock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Branch {
    levels: Vec<Level>,
    fc1: ConvIdx,
    fc2: ConvIdx,
}

/// The two-stream network: identical 3D-CNN branches, per-stream softmax
/// heads and a late-fusion head. In one-stream mode only the first branch
/// exists.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStreamNet<F> {
    config: ModelConfig,
    params: Vec<Parameter<F>>,
    branches: Vec<Branch>,
    concat: Option<ConvIdx>,
}

/// Parameters of a network recorded on a tape, indexed like
/// [`TwoStreamNet::params`].
#[derive(Debug, Clone)]
pub struct Bound<'t, F> {
    vars: Vec<Var<'t, F>>,
}

impl<'t, F> Bound<'t, F> {
    pub fn vars(&self) -> &[Var<'t, F>] {
        &self.vars
    }
}

struct Builder<F> {
    params: Vec<Parameter<F>>,
    fans: Vec<usize>,
}

impl<F: Element> Builder<F> {
    fn add(&mut self, name: String, shape: &[usize], fan_in: usize) -> usize {
        self.params.push(Parameter::new(name, Tensor::zeros(shape)));
        self.fans.push(fan_in);
        self.params.len() - 1
    }

    fn conv(&mut self, prefix: &str, c_out: usize, c_in: usize, k: [usize; 3]) -> ConvIdx {
        let fan_in = c_in * k.iter().product::<usize>();
        ConvIdx {
            weight: self.add(format!("{prefix}.weight"), &[c_out, c_in, k[0], k[1], k[2]], fan_in),
            bias: self.add(format!("{prefix}.bias"), &[c_out], fan_in),
        }
    }

    fn linear(&mut self, prefix: &str, out: usize, inp: usize) -> ConvIdx {
        ConvIdx {
            weight: self.add(format!("{prefix}.weight"), &[out, inp], inp),
            bias: self.add(format!("{prefix}.bias"), &[out], inp),
        }
    }
}

impl<F: Element> TwoStreamNet<F> {
    /// Builds the topology with all parameters zero.
    pub fn zeroed(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            params: Vec::new(),
            fans: Vec::new(),
        };
        let n_branches = match config.streams {
            Streams::One => 1,
            Streams::Two => 2,
        };
        let mut branches = Vec::new();
        for name in ["branch_a", "branch_b"].into_iter().take(n_branches) {
            let mut levels = Vec::new();
            let mut c_in = config.input_size.channels;
            for (i, &c) in config.filters.iter().enumerate() {
                let conv = b.conv(&format!("{name}.conv{i}"), c, c_in, config.kernel);
                let mid = (c / 8).max(1);
                let attention = AttentionBlock {
                    reduce: b.conv(&format!("{name}.att{i}.reduce"), mid, c, [1, 1, 1]),
                    expand: b.conv(&format!("{name}.att{i}.expand"), c, mid, [1, 1, 1]),
                    channels: c,
                };
                levels.push(Level { conv, attention });
                c_in = c;
            }
            let fc1 = b.linear(&format!("{name}.fc1"), config.hidden_dim, config.feature_len());
            let fc2 = b.linear(&format!("{name}.fc2"), config.num_classes, config.hidden_dim);
            branches.push(Branch { levels, fc1, fc2 });
        }
        let concat = (config.streams == Streams::Two && config.fusion == Fusion::Concat)
            .then(|| b.linear("fusion.concat", config.num_classes, 2 * config.num_classes));
        Ok(TwoStreamNet {
            config: config.clone(),
            params: b.params,
            branches,
            concat,
        })
    }

    /// Deterministic initialisation: every value uniform in `±1/√fan_in`,
    /// drawn from a ChaCha8 stream seeded with `seed`, parameters in order.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        let fans = net.fan_ins();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (p, fan_in) in net.params.iter_mut().zip(fans) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in p.value.data_mut() {
                *v = F::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound);
            }
        }
        Ok(net)
    }

    fn fan_ins(&self) -> Vec<usize> {
        self.params
            .iter()
            .map(|p| {
                let s = p.value.shape();
                if s.len() == 1 {
                    // bias: same fan-in as its weight, which precedes it
                    0
                } else {
                    s[1..].iter().product()
                }
            })
            .scan(0usize, |last, f| {
                if f != 0 {
                    *last = f;
                }
                Some(*last)
            })
            .collect()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<F>] {
        &mut self.params
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records all parameters on `tape` as gradient-tracked leaves.
    pub fn bind<'t>(&self, tape: &'t Tape<F>) -> Bound<'t, F> {
        Bound {
            vars: self.params.iter().map(|p| tape.param(p.value.clone())).collect(),
        }
    }

    /// Records all parameters as constants (inference only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<F>) -> Bound<'t, F> {
        Bound {
            vars: self.params.iter().map(|p| tape.constant(p.value.clone())).collect(),
        }
    }

    /// Adds the tape's leaf gradients into each parameter's `grad`.
    pub fn accumulate_grads(&mut self, tape: &Tape<F>, bound: &Bound<'_, F>) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = tape.grad(v) {
                p.accumulate_grad(&g)?;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Copies branch A's weights into branch B.
    pub fn mirror_branches(&mut self) {
        if self.branches.len() < 2 {
            return;
        }
        let half = self
            .params
            .iter()
            .take_while(|p| p.name.starts_with("branch_a."))
            .count();
        for i in 0..half {
            let v = self.params[i].value.clone();
            self.params[half + i].value = v;
        }
    }

    /// Attention block of `level` in `branch`.
    pub fn attention_block(&self, branch: usize, level: usize) -> AttentionBlock {
        self.branches[branch].levels[level].attention
    }

    pub fn attention_forward<'t>(
        &self,
        bound: &Bound<'t, F>,
        block: AttentionBlock,
        x: Var<'t, F>,
    ) -> Result<Var<'t, F>> {
        let c = x.shape().get(1).copied().unwrap_or(0);
        if c != block.channels {
            return Err(Error::shape(
                "attention",
                format!("input has {c} channels, block expects {}", block.channels),
            ));
        }
        let v = &bound.vars;
        let hidden = x
            .conv3d(v[block.reduce.weight], v[block.reduce.bias], [0, 0, 0])?
            .relu();
        let mask = hidden
            .conv3d(v[block.expand.weight], v[block.expand.bias], [0, 0, 0])?
            .sigmoid();
        x.add(x.mul(mask)?)
    }

    fn check_clip(&self, clip: &Var<'_, F>) -> Result<()> {
        let got = clip.shape();
        let want = self.config.clip_shape(got.first().copied().unwrap_or(0));
        if got.len() != 5 || got[1..] != want[1..] || got[0] == 0 {
            return Err(Error::shape(
                "branch_forward",
                format!("expected clip N×{:?}, got {:?}", &want[1..], got),
            ));
        }
        Ok(())
    }

    /// One stream: conv → relu → attention → pool per level, then
    /// flatten → linear → relu → linear → softmax. Returns `N×K` probabilities.
    pub fn branch_forward<'t>(&self, bound: &Bound<'t, F>, branch: usize, clip: Var<'t, F>) -> Result<Var<'t, F>> {
        self.check_clip(&clip)?;
        let br = self
            .branches
            .get(branch)
            .ok_or_else(|| Error::InvalidArgument(format!("branch {branch} does not exist")))?;
        let v = &bound.vars;
        let pad = self.config.padding();
        let mut x = clip;
        for (i, level) in br.levels.iter().enumerate() {
            x = x.conv3d(v[level.conv.weight], v[level.conv.bias], pad)?.relu();
            x = self.attention_forward(bound, level.attention, x)?;
            x = x.maxpool3d(self.config.pool_thw(i))?;
        }
        x.flatten()?
            .linear(v[br.fc1.weight], v[br.fc1.bias])?
            .relu()
            .linear(v[br.fc2.weight], v[br.fc2.bias])?
            .softmax()
    }

    /// Fuses two per-stream probability tensors with the configured rule.
    pub fn fuse<'t>(&self, bound: &Bound<'t, F>, pa: Var<'t, F>, pb: Var<'t, F>) -> Result<Var<'t, F>> {
        let concat = self.concat.map(|c| (bound.vars[c.weight], bound.vars[c.bias]));
        fuse_outputs(pa, pb, self.config.fusion, concat)
    }

    /// Full forward pass. Two-stream mode requires `clip_b`.
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t, F>,
        clip_a: Var<'t, F>,
        clip_b: Option<Var<'t, F>>,
    ) -> Result<Var<'t, F>> {
        let pa = self.branch_forward(bound, 0, clip_a)?;
        match self.config.streams {
            Streams::One => Ok(pa),
            Streams::Two => {
                let clip_b = clip_b
                    .ok_or_else(|| Error::InvalidArgument("two-stream model needs a second clip".into()))?;
                let pb = self.branch_forward(bound, 1, clip_b)?;
                self.fuse(bound, pa, pb)
            }
        }
    }

    /// Inference on raw tensors.
    pub fn predict(&self, clip_a: &Tensor<F>, clip_b: Option<&Tensor<F>>) -> Result<Tensor<F>> {
        let tape = Tape::new();
        let bound = self.bind_frozen(&tape);
        let a = tape.constant(clip_a.clone());
        let b = clip_b.map(|c| tape.constant(c.clone()));
        let out = self.forward(&bound, a, b)?;
        let v = out.value().clone();
        Ok(v)
    }
}

/// Late fusion of per-stream probabilities `N×K`.
///
/// `concat` supplies the `K×2K` weight and `K` bias of the concatenation
/// head and is required only for [`Fusion::Concat`].
pub fn fuse_outputs<'t, F: Element>(
    pa: Var<'t, F>,
    pb: Var<'t, F>,
    mode: Fusion,
    concat: Option<(Var<'t, F>, Var<'t, F>)>,
) -> Result<Var<'t, F>> {
    let (sa, sb) = (pa.shape(), pb.shape());
    if sa != sb || sa.len() != 2 {
        return Err(Error::shape("fuse_outputs", format!("{sa:?} vs {sb:?}")));
    }
    match mode {
        Fusion::Summed => pa.add(pb)?.softmax(),
        Fusion::Weighted { w1, w2 } => pa.scale(F::from_f64(w1)).add(pb.scale(F::from_f64(w2)))?.softmax(),
        Fusion::Concat => {
            let (w, b) =
                concat.ok_or_else(|| Error::InvalidArgument("concat fusion needs its linear head".into()))?;
            pa.concat(pb)?.linear(w, b)?.softmax()
        }
    }
}
