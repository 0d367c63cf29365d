#include "dspsd/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace dspsd {

Sequence compress_sequence(const Sequence& seq, std::size_t target_len, std::size_t dim) {
    if (target_len == 0) throw ConfigError("target sequence length must be >= 1");
    for (const auto& e : seq) {
        if (e.size() != dim) throw ShapeError("sequence element has the wrong dimension");
    }
    Sequence out;
    out.reserve(target_len);
    if (seq.size() <= target_len) {
        out = seq;
        out.resize(target_len, std::vector<double>(dim, 0.0));
        return out;
    }
    const std::size_t base = seq.size() / target_len;
    // A block of identical points keeps that point exactly, so runs of equal
    // inputs survive compression bit for bit.
    const std::size_t extra = seq.size() % target_len;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < target_len; ++b) {
        const std::size_t len = base + (b < extra ? 1 : 0);
        const bool uniform = std::all_of(seq.begin() + static_cast<std::ptrdiff_t>(pos),
                                         seq.begin() + static_cast<std::ptrdiff_t>(pos + len),
                                         [&](const auto& e) { return e == seq[pos]; });
        if (uniform) {
            out.push_back(seq[pos]);
            pos += len;
            continue;
        }
        std::vector<double> mean(dim, 0.0);
        for (std::size_t i = 0; i < len; ++i) axpy(1.0, seq[pos + i], mean);
        for (double& x : mean) x /= static_cast<double>(len);
        out.push_back(std::move(mean));
        pos += len;
    }
    return out;
}

namespace {

bool is_zero(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; });
}

}  // namespace

InputScaler InputScaler::fit(const std::vector<Sequence>& sequences, std::size_t dim) {
    InputScaler sc;
    sc.mean.assign(dim, 0.0);
    sc.scale.assign(dim, 1.0);
    std::vector<double> sq(dim, 0.0);
    double n = 0.0;
    for (const auto& seq : sequences)
        for (const auto& x : seq) {
            if (x.size() != dim) throw ShapeError("scaler input has the wrong dimension");
            if (is_zero(x)) continue;
            n += 1.0;
            axpy(1.0, x, sc.mean);
        }
    if (n == 0.0) return sc;
    for (double& m : sc.mean) m /= n;
    for (const auto& seq : sequences)
        for (const auto& x : seq) {
            if (is_zero(x)) continue;
            for (std::size_t j = 0; j < dim; ++j) sq[j] += (x[j] - sc.mean[j]) * (x[j] - sc.mean[j]);
        }
    for (std::size_t j = 0; j < dim; ++j) {
        const double sd = std::sqrt(sq[j] / n);
        // Constant dimensions are only centred.
        sc.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return sc;
}

Sequence InputScaler::apply(const Sequence& seq) const {
    if (empty()) return seq;
    Sequence out = seq;
    for (auto& x : out) {
        if (x.size() != mean.size()) throw ShapeError("scaler input has the wrong dimension");
        if (is_zero(x)) continue;
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) / scale[j];
    }
    return out;
}

void InputScaler::backprop(Sequence& d_scaled, const Sequence& raw) const {
    if (empty()) return;
    for (std::size_t t = 0; t < d_scaled.size(); ++t) {
        auto& d = d_scaled[t];
        if (t < raw.size() && is_zero(raw[t])) {
            std::fill(d.begin(), d.end(), 0.0);
            continue;
        }
        for (std::size_t j = 0; j < d.size(); ++j) d[j] /= scale[j];
    }
}

SequenceModelParams SequenceModelParams::zeros(std::size_t hidden, std::size_t input_dim) {
    SequenceModelParams p;
    for (Tensor2* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cell})
        *w = Tensor2(hidden, hidden + input_dim);
    for (Tensor2* b : {&p.b_input, &p.b_forget, &p.b_output, &p.b_cell}) *b = Tensor2(hidden, 1);
    p.dropout = 0.0;
    return p;
}

SequenceModelParams SequenceModelParams::initialized(std::size_t hidden, std::size_t input_dim,
                                                     double dropout, Rng& rng) {
    if (hidden == 0 || input_dim == 0) throw ConfigError("LSTM sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    SequenceModelParams p = zeros(hidden, input_dim);
    for (Tensor2* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cell}) fill_glorot(*w, rng);
    p.dropout = dropout;
    return p;
}

std::vector<Tensor2*> SequenceModelParams::tensors() {
    return {&w_input, &w_forget, &w_output, &w_cell, &b_input, &b_forget, &b_output, &b_cell};
}

std::vector<const Tensor2*> SequenceModelParams::tensors() const {
    return {&w_input, &w_forget, &w_output, &w_cell, &b_input, &b_forget, &b_output, &b_cell};
}

double SequenceModelParams::weight_squared_norm() const {
    double s = 0.0;
    for (const Tensor2* t : tensors()) s += t->squared_norm();
    return s;
}

namespace {

constexpr std::size_t kGates = 4;

const Tensor2& gate_weight(const SequenceModelParams& p, std::size_t g) {
    switch (g) {
        case 0: return p.w_input;
        case 1: return p.w_forget;
        case 2: return p.w_output;
        default: return p.w_cell;
    }
}

const Tensor2& gate_bias(const SequenceModelParams& p, std::size_t g) {
    switch (g) {
        case 0: return p.b_input;
        case 1: return p.b_forget;
        case 2: return p.b_output;
        default: return p.b_cell;
    }
}

Tensor2& gate_weight(SequenceModelParams& p, std::size_t g) {
    return const_cast<Tensor2&>(gate_weight(std::as_const(p), g));
}

Tensor2& gate_bias(SequenceModelParams& p, std::size_t g) {
    return const_cast<Tensor2&>(gate_bias(std::as_const(p), g));
}

}  // namespace

LstmTrace lstm_forward(const Sequence& seq, const SequenceModelParams& params,
                       bool dropout_active, Rng& rng) {
    const std::size_t h = params.hidden();
    const std::size_t d = params.input_dim();
    LstmTrace trace;
    trace.inputs = seq;
    trace.steps.reserve(seq.size());
    trace.run_start.reserve(seq.size());

    std::vector<double> h_prev(h, 0.0), s_prev(h, 0.0);
    // Input projections W_g[:, h:] x, reused across runs of identical inputs.
    std::vector<std::vector<double>> x_proj(kGates, std::vector<double>(h, 0.0));
    std::vector<std::vector<double>> pre(kGates, std::vector<double>(h));
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const auto& x = seq[t];
        if (x.size() != d) throw ShapeError("LSTM input has the wrong dimension");
        const bool same = t > 0 && x == seq[t - 1];
        trace.run_start.push_back(same ? trace.run_start.back() : t);
        if (!same) {
            const bool zero = is_zero(x);
            for (std::size_t g = 0; g < kGates; ++g) {
                const Tensor2& w = gate_weight(params, g);
                for (std::size_t j = 0; j < h; ++j)
                    x_proj[g][j] = zero ? 0.0 : dot(w.row(j).subspan(h, d), x);
            }
        }
        for (std::size_t g = 0; g < kGates; ++g) {
            const Tensor2& w = gate_weight(params, g);
            const Tensor2& b = gate_bias(params, g);
            for (std::size_t j = 0; j < h; ++j)
                pre[g][j] = dot(w.row(j).subspan(0, h), h_prev) + x_proj[g][j] + b(j, 0);
        }
        LstmStep st;
        st.in.resize(h);
        st.forget.resize(h);
        st.out.resize(h);
        st.cand.resize(h);
        st.state.resize(h);
        st.hidden.resize(h);
        for (std::size_t j = 0; j < h; ++j) {
            st.in[j] = sigmoid(pre[0][j]);
            st.forget[j] = sigmoid(pre[1][j]);
            st.out[j] = sigmoid(pre[2][j]);
            st.cand[j] = std::tanh(pre[3][j]);
            st.state[j] = st.forget[j] * s_prev[j] + st.in[j] * st.cand[j];
            st.hidden[j] = st.out[j] * std::tanh(st.state[j]);
        }
        h_prev = st.hidden;
        s_prev = st.state;
        trace.steps.push_back(std::move(st));
    }

    trace.output = h_prev;
    if (dropout_active && params.dropout > 0.0) {
        const double keep = 1.0 - params.dropout;
        trace.dropout_mask.resize(h);
        for (std::size_t j = 0; j < h; ++j) {
            trace.dropout_mask[j] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
            trace.output[j] *= trace.dropout_mask[j];
        }
    }
    return trace;
}

LstmGrads lstm_gradients(const LstmTrace& trace, const SequenceModelParams& params,
                         std::span<const double> d_output, bool want_input_grads) {
    const std::size_t h = params.hidden();
    const std::size_t d = params.input_dim();
    if (d_output.size() != h) throw ShapeError("LSTM upstream gradient has the wrong size");
    if (trace.steps.size() != trace.inputs.size()) throw ConfigError("LSTM trace is incomplete");

    LstmGrads grads{SequenceModelParams::zeros(h, d), {}};
    if (want_input_grads) grads.inputs.assign(trace.inputs.size(), std::vector<double>(d, 0.0));
    const std::size_t n = trace.steps.size();

    std::vector<double> dh(d_output.begin(), d_output.end());
    if (!trace.dropout_mask.empty())
        for (std::size_t j = 0; j < h; ++j) dh[j] *= trace.dropout_mask[j];
    std::vector<double> ds_next(h, 0.0);
    const std::vector<double> zeros(h, 0.0);
    std::vector<std::vector<double>> dpre(kGates, std::vector<double>(h));
    std::vector<std::vector<double>> run_acc(kGates, std::vector<double>(h, 0.0));

    for (std::size_t t = n; t-- > 0;) {
        const LstmStep& st = trace.steps[t];
        const auto& s_prev = t > 0 ? trace.steps[t - 1].state : zeros;
        const auto& h_prev = t > 0 ? trace.steps[t - 1].hidden : zeros;
        for (std::size_t j = 0; j < h; ++j) {
            const double ts = std::tanh(st.state[j]);
            const double d_o = dh[j] * ts;
            const double d_s = ds_next[j] + dh[j] * st.out[j] * (1.0 - ts * ts);
            dpre[0][j] = d_s * st.cand[j] * st.in[j] * (1.0 - st.in[j]);
            dpre[1][j] = d_s * s_prev[j] * st.forget[j] * (1.0 - st.forget[j]);
            dpre[2][j] = d_o * st.out[j] * (1.0 - st.out[j]);
            dpre[3][j] = d_s * st.in[j] * (1.0 - st.cand[j] * st.cand[j]);
            ds_next[j] = d_s * st.forget[j];
        }
        std::vector<double> dh_prev(h, 0.0);
        for (std::size_t g = 0; g < kGates; ++g) {
            const Tensor2& w = gate_weight(params, g);
            Tensor2& dw = gate_weight(grads.params, g);
            Tensor2& db = gate_bias(grads.params, g);
            for (std::size_t j = 0; j < h; ++j) {
                const double gj = dpre[g][j];
                if (gj == 0.0) continue;
                db(j, 0) += gj;
                axpy(gj, h_prev, dw.row(j).subspan(0, h));
                axpy(gj, w.row(j).subspan(0, h), dh_prev);
                if (want_input_grads) axpy(gj, w.row(j).subspan(h, d), grads.inputs[t]);
                run_acc[g][j] += gj;
            }
        }
        // Input-weight gradients are flushed once per run of identical inputs.
        if (trace.run_start[t] == t) {
            const auto& x = trace.inputs[t];
            const bool zero = is_zero(x);
            for (std::size_t g = 0; g < kGates; ++g) {
                Tensor2& dw = gate_weight(grads.params, g);
                for (std::size_t j = 0; j < h; ++j) {
                    if (!zero && run_acc[g][j] != 0.0) axpy(run_acc[g][j], x, dw.row(j).subspan(h, d));
                    run_acc[g][j] = 0.0;
                }
            }
        }
        dh = std::move(dh_prev);
    }
    return grads;
}

}  // namespace dspsd
