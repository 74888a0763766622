//! LSTM cell, the bidirectional encoder, and the bridge that maps final
//! encoder states to the decoder's initial state.

use crate::graph::NodeId;

use super::ForwardPass;

/// Encoder outputs: per-position hidden rows plus the decoder start state.
pub struct EncOut {
    /// One row per source position, `enc_hidden` wide (forward and backward
    /// halves concatenated).
    pub hidden: NodeId,
    pub h0: NodeId,
    pub c0: NodeId,
}

impl ForwardPass<'_> {
    /// One LSTM step. Gate blocks in the fused weight matrices are ordered
    /// input, forget, cell, output.
    pub(super) fn lstm_step(
        &mut self,
        prefix: &str,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        hidden: usize,
    ) -> (NodeId, NodeId) {
        let wx = self.param(&format!("{prefix}.wx"));
        let wh = self.param(&format!("{prefix}.wh"));
        let b = self.param(&format!("{prefix}.b"));
        let from_x = self.graph.matmul(x, wx);
        let from_h = self.graph.matmul(h, wh);
        let pre = self.graph.add(from_x, from_h);
        let gates = self.graph.add_row(pre, b);
        let i_raw = self.graph.slice_cols(gates, 0, hidden);
        let f_raw = self.graph.slice_cols(gates, hidden, 2 * hidden);
        let g_raw = self.graph.slice_cols(gates, 2 * hidden, 3 * hidden);
        let o_raw = self.graph.slice_cols(gates, 3 * hidden, 4 * hidden);
        let i = self.graph.sigmoid(i_raw);
        let f = self.graph.sigmoid(f_raw);
        let g = self.graph.tanh(g_raw);
        let o = self.graph.sigmoid(o_raw);
        let keep = self.graph.mul(f, c);
        let write = self.graph.mul(i, g);
        let c_next = self.graph.add(keep, write);
        let c_act = self.graph.tanh(c_next);
        let h_next = self.graph.mul(o, c_act);
        (h_next, c_next)
    }

    /// Bidirectional encoding of an embedded (and possibly enriched) source.
    pub fn encode(&mut self, x: NodeId) -> EncOut {
        let len = self.graph.value(x).nrows();
        assert!(len > 0, "cannot encode an empty source");
        let hdir = self.model.hp().enc_hidden / 2;

        let mut fwd_h = Vec::with_capacity(len);
        let mut h = self.zeros(1, hdir);
        let mut c = self.zeros(1, hdir);
        for t in 0..len {
            let x_t = self.graph.slice_rows(x, t, t + 1);
            (h, c) = self.lstm_step("enc.fwd", x_t, h, c, hdir);
            fwd_h.push(h);
        }
        let (fwd_last_h, fwd_last_c) = (h, c);

        let mut bwd_h = vec![None; len];
        let mut h = self.zeros(1, hdir);
        let mut c = self.zeros(1, hdir);
        for t in (0..len).rev() {
            let x_t = self.graph.slice_rows(x, t, t + 1);
            (h, c) = self.lstm_step("enc.bwd", x_t, h, c, hdir);
            bwd_h[t] = Some(h);
        }
        let (bwd_last_h, bwd_last_c) = (h, c);

        let mut hidden = None;
        for t in 0..len {
            let row = self
                .graph
                .concat_cols(fwd_h[t], bwd_h[t].expect("filled above"));
            hidden = Some(match hidden {
                Some(prev) => self.graph.concat_rows(prev, row),
                None => row,
            });
        }
        let final_h = self.graph.concat_cols(fwd_last_h, bwd_last_h);
        let final_c = self.graph.concat_cols(fwd_last_c, bwd_last_c);
        let h0 = self.affine_row(final_h, "bridge.wh", "bridge.bh");
        let c0 = self.affine_row(final_c, "bridge.wc", "bridge.bc");
        EncOut {
            hidden: hidden.expect("len > 0"),
            h0,
            c0,
        }
    }
}
