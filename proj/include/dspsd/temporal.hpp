#pragma once

#include <span>
#include <vector>

#include "dspsd/numerics.hpp"

namespace dspsd {

using Sequence = std::vector<std::vector<double>>;

// Fits a sequence to exactly `target_len` steps. Longer sequences are split
// into contiguous blocks whose sizes differ by at most one (longer blocks
// first) and each block is replaced by its unweighted mean; shorter ones are
// zero-padded at the end.
Sequence compress_sequence(const Sequence& seq, std::size_t target_len, std::size_t dim);

// Per-dimension standardization of temporal points, fitted on training
// sequences. All-zero padding rows are left at zero. Empty means identity.
struct InputScaler {
    std::vector<double> mean;
    std::vector<double> scale;

    bool empty() const { return mean.empty(); }
    static InputScaler fit(const std::vector<Sequence>& sequences, std::size_t dim);
    Sequence apply(const Sequence& seq) const;
    // Maps a gradient on scaled inputs back to the raw inputs, in place.
    void backprop(Sequence& d_scaled, const Sequence& raw) const;
};

// Single-layer LSTM. Each gate weight acts on the concatenation [h_{t-1}; x_t].
struct SequenceModelParams {
    Tensor2 w_input, w_forget, w_output, w_cell;  // hidden x (hidden + input_dim)
    Tensor2 b_input, b_forget, b_output, b_cell;  // hidden x 1
    double dropout = 0.75;

    std::size_t hidden() const { return w_input.rows(); }
    std::size_t input_dim() const { return w_input.cols() - w_input.rows(); }

    static SequenceModelParams initialized(std::size_t hidden, std::size_t input_dim,
                                           double dropout, Rng& rng);
    static SequenceModelParams zeros(std::size_t hidden, std::size_t input_dim);

    std::vector<Tensor2*> tensors();
    std::vector<const Tensor2*> tensors() const;
    double weight_squared_norm() const;
};

struct LstmStep {
    std::vector<double> in, forget, out, cand, state, hidden;
};

struct LstmTrace {
    Sequence inputs;
    // run_start[t] is the first step of the run of identical inputs containing t.
    std::vector<std::size_t> run_start;
    std::vector<LstmStep> steps;
    std::vector<double> dropout_mask;  // empty when dropout was inactive
    std::vector<double> output;        // final hidden state after dropout
};

LstmTrace lstm_forward(const Sequence& seq, const SequenceModelParams& params,
                       bool dropout_active, Rng& rng);

struct LstmGrads {
    SequenceModelParams params;  // same shapes, holds gradients
    Sequence inputs;             // empty unless requested
};

// Backpropagation through time from a gradient on the final output.
LstmGrads lstm_gradients(const LstmTrace& trace, const SequenceModelParams& params,
                         std::span<const double> d_output, bool want_input_grads = false);

}  // namespace dspsd
