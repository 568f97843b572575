use serde::{Deserialize, Serialize};

use super::{cached, expect_shape, Layer};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Average,
    Max,
}

/// Non-overlapping pooling: stride equals the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub window: (usize, usize),
}

impl PoolSpec {
    pub fn average(window: (usize, usize)) -> Self {
        Self {
            kind: PoolKind::Average,
            window,
        }
    }

    pub fn max(window: (usize, usize)) -> Self {
        Self {
            kind: PoolKind::Max,
            window,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.window == (1, 1)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let [n, c, t, f] = input;
        let (pt, pf) = self.window;
        if pt == 0 || pf == 0 {
            return Err(Error::InvalidArgument("pool window must be >= 1".into()));
        }
        if t % pt != 0 || f % pf != 0 {
            return Err(Error::InvalidShape {
                shape: input.to_vec(),
                reason: format!("(T, F) = ({t}, {f}) not divisible by pool window ({pt}, {pf})"),
            });
        }
        Ok([n, c, t / pt, f / pf])
    }
}

#[derive(Debug, Clone)]
pub struct Pool {
    spec: PoolSpec,
    input_shape: Option<Shape>,
    // flat input index of each output element's maximum
    argmax: Vec<usize>,
}

impl Pool {
    pub fn new(spec: PoolSpec) -> Self {
        Self {
            spec,
            input_shape: None,
            argmax: Vec::new(),
        }
    }

    pub fn spec(&self) -> &PoolSpec {
        &self.spec
    }
}

impl Layer for Pool {
    fn name(&self) -> String {
        format!("{:?}pool{:?}", self.spec.kind, self.spec.window).to_lowercase()
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.spec.output_shape(x.shape())?;
        let [n_len, c_len, to, fo] = out_shape;
        let (pt, pf) = self.spec.window;
        let mut y = Tensor::zeros_unchecked(out_shape);
        self.argmax.clear();
        let inv = 1.0 / (pt * pf) as f64;
        for n in 0..n_len {
            for c in 0..c_len {
                for t in 0..to {
                    for f in 0..fo {
                        let v = match self.spec.kind {
                            PoolKind::Average => {
                                let mut acc = 0.0;
                                for i in 0..pt {
                                    for j in 0..pf {
                                        acc += x.get(n, c, t * pt + i, f * pf + j);
                                    }
                                }
                                acc * inv
                            }
                            PoolKind::Max => {
                                let mut best = x.index(n, c, t * pt, f * pf);
                                for i in 0..pt {
                                    for j in 0..pf {
                                        let k = x.index(n, c, t * pt + i, f * pf + j);
                                        // strict comparison keeps the lowest index on ties
                                        if x.data()[k] > x.data()[best] {
                                            best = k;
                                        }
                                    }
                                }
                                self.argmax.push(best);
                                x.data()[best]
                            }
                        };
                        y.set(n, c, t, f, v);
                    }
                }
            }
        }
        self.input_shape = Some(x.shape());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let in_shape = *cached(&self.input_shape, &name)?;
        expect_shape("pool cotangent", self.spec.output_shape(in_shape)?, dy)?;
        let mut dx = Tensor::zeros_unchecked(in_shape);
        let (pt, pf) = self.spec.window;
        match self.spec.kind {
            PoolKind::Average => {
                let inv = 1.0 / (pt * pf) as f64;
                let [n_len, c_len, to, fo] = dy.shape();
                for n in 0..n_len {
                    for c in 0..c_len {
                        for t in 0..to {
                            for f in 0..fo {
                                let g = dy.get(n, c, t, f) * inv;
                                for i in 0..pt {
                                    for j in 0..pf {
                                        dx.set(n, c, t * pt + i, f * pf + j, g);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            PoolKind::Max => {
                for (&k, &g) in self.argmax.iter().zip(dy.data()) {
                    dx.data_mut()[k] += g;
                }
            }
        }
        Ok(dx)
    }
}
