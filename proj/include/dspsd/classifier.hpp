#pragma once

#include <span>
#include <vector>

#include "dspsd/numerics.hpp"
#include "dspsd/txgraph.hpp"

namespace dspsd {

// Sigmoid MLP ending in a linear projection to a scalar margin y_hat.
// P(Ponzi) = softmax([0, y_hat])[1] = sigmoid(y_hat).
struct ClassifierParams {
    std::vector<Tensor2> weights;  // layer l: out x in
    std::vector<Tensor2> biases;   // layer l: out x 1

    std::size_t input_dim() const { return weights.front().cols(); }
    std::size_t num_layers() const { return weights.size(); }

    static ClassifierParams initialized(std::size_t input_dim, const std::vector<std::size_t>& widths,
                                        Rng& rng);
    static ClassifierParams zeros_like(const ClassifierParams& other);
    double weight_squared_norm() const;
};

struct MlpTrace {
    std::vector<std::vector<double>> activations;  // input, then each hidden layer
    double margin = 0.0;

    double probability() const { return sigmoid(margin); }
};

MlpTrace mlp_forward(std::span<const double> input, const ClassifierParams& params);

struct MlpGrads {
    ClassifierParams params;
    std::vector<double> input;
};

MlpGrads mlp_gradients(const MlpTrace& trace, const ClassifierParams& params, double d_margin);

// sum_i [y_i ln(1 + e^-m_i) + (1 - y_i) ln(1 + e^m_i)] + lambda * theta_squared_norm
double classification_loss(std::span<const double> margins, std::span<const int> labels,
                           double lambda, double theta_squared_norm);

// d/dm of one example's data term.
double classification_loss_grad(double margin, int label);

// Ponzi iff margin > threshold (ties are Normal).
Label predict(double margin, double threshold = 0.0);

}  // namespace dspsd
