//! Per-equation enrichment: each math span runs independently through one
//! multi-head self-attention block (positional encoding, MHA, add&norm,
//! feed-forward, add&norm). Rows outside every span pass through untouched.

use ndarray::Array2;

use crate::corpus::EquationSpan;
use crate::graph::NodeId;

use super::{ForwardPass, ModelError, LN_EPS};

/// Sinusoidal positional encodings over `n` within-span offsets, `d` wide.
pub fn sinusoidal_pe(n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(pos, j)| {
        let pair = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn check_spans(spans: &[EquationSpan], len: usize) -> Result<(), ModelError> {
    let mut cursor = 0;
    for span in spans {
        if span.is_empty() || span.end > len || span.start < cursor {
            return Err(ModelError::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len,
            });
        }
        cursor = span.end;
    }
    Ok(())
}

impl ForwardPass<'_> {
    /// Runs the enrichment over an embedded source. With the math block
    /// disabled or no spans present this is the identity.
    pub fn enrich(&mut self, emb: NodeId, spans: &[EquationSpan]) -> Result<NodeId, ModelError> {
        let len = self.graph.value(emb).nrows();
        check_spans(spans, len)?;
        if !self.model.hp().enable_math_block || spans.is_empty() {
            return Ok(emb);
        }
        let mut segments = Vec::new();
        let mut cursor = 0;
        for span in spans {
            if span.start > cursor {
                segments.push(self.graph.slice_rows(emb, cursor, span.start));
            }
            let rows = self.graph.slice_rows(emb, span.start, span.end);
            segments.push(self.math_block(rows));
            cursor = span.end;
        }
        if cursor < len {
            segments.push(self.graph.slice_rows(emb, cursor, len));
        }
        let mut out = segments[0];
        for seg in &segments[1..] {
            out = self.graph.concat_rows(out, *seg);
        }
        Ok(out)
    }

    /// One Transformer-encoder sub-block applied to the rows of a single
    /// equation.
    fn math_block(&mut self, rows: NodeId) -> NodeId {
        let (heads, d) = (self.model.hp().num_heads, self.model.hp().emb_dim);
        let dh = d / heads;
        let n = self.graph.value(rows).nrows();

        let pe = sinusoidal_pe(n, d);
        let x = self.graph.add_const(rows, &pe);

        let q = self.affine_row(x, "block.wq", "block.bq");
        let k = self.affine_row(x, "block.wk", "block.bk");
        let v = self.affine_row(x, "block.wv", "block.bv");
        let mut cat = None;
        for h in 0..heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = self.graph.slice_cols(q, lo, hi);
            let kh = self.graph.slice_cols(k, lo, hi);
            let vh = self.graph.slice_cols(v, lo, hi);
            let kt = self.graph.transpose(kh);
            let scores = self.graph.matmul(qh, kt);
            let scaled = self.graph.affine(scores, 1.0 / (dh as f64).sqrt(), 0.0);
            let att = self.graph.softmax_rows(scaled);
            let head = self.graph.matmul(att, vh);
            cat = Some(match cat {
                Some(prev) => self.graph.concat_cols(prev, head),
                None => head,
            });
        }
        let merged = self.affine_row(cat.expect("at least one head"), "block.wo", "block.bo");

        let res1 = self.graph.add(x, merged);
        let (g1, b1) = (self.param("block.ln1.gain"), self.param("block.ln1.bias"));
        let norm1 = self.graph.layer_norm(res1, g1, b1, LN_EPS);

        let inner = self.affine_row(norm1, "block.ffn.w1", "block.ffn.b1");
        let inner = self.graph.relu(inner);
        let ffn = self.affine_row(inner, "block.ffn.w2", "block.ffn.b2");

        let res2 = self.graph.add(norm1, ffn);
        let (g2, b2) = (self.param("block.ln2.gain"), self.param("block.ln2.bias"));
        let norm2 = self.graph.layer_norm(res2, g2, b2, LN_EPS);
        self.dropout(norm2)
    }
}
