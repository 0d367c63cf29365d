#include "dspsd/classifier.hpp"

namespace dspsd {

ClassifierParams ClassifierParams::initialized(std::size_t input_dim,
                                               const std::vector<std::size_t>& widths, Rng& rng) {
    if (input_dim == 0) throw ConfigError("classifier input dimension must be positive");
    ClassifierParams p;
    std::size_t fan_in = input_dim;
    auto add_layer = [&](std::size_t out) {
        if (out == 0) throw ConfigError("classifier layer width must be positive");
        Tensor2 w(out, fan_in);
        fill_glorot(w, rng);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(out, 1);
        fan_in = out;
    };
    for (std::size_t width : widths) add_layer(width);
    add_layer(1);
    return p;
}

ClassifierParams ClassifierParams::zeros_like(const ClassifierParams& other) {
    ClassifierParams p;
    for (const auto& w : other.weights) p.weights.emplace_back(w.rows(), w.cols());
    for (const auto& b : other.biases) p.biases.emplace_back(b.rows(), b.cols());
    return p;
}

double ClassifierParams::weight_squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squared_norm();
    for (const auto& b : biases) s += b.squared_norm();
    return s;
}

MlpTrace mlp_forward(std::span<const double> input, const ClassifierParams& params) {
    if (params.weights.empty()) throw ConfigError("classifier has no layers");
    if (input.size() != params.input_dim()) throw ShapeError("classifier input has the wrong size");
    MlpTrace trace;
    trace.activations.emplace_back(input.begin(), input.end());
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const Tensor2& w = params.weights[l];
        const auto& x = trace.activations.back();
        std::vector<double> y(w.rows());
        for (std::size_t j = 0; j < w.rows(); ++j) y[j] = dot(w.row(j), x) + params.biases[l](j, 0);
        if (l + 1 == params.num_layers()) {
            trace.margin = y[0];
        } else {
            for (double& v : y) v = sigmoid(v);
            trace.activations.push_back(std::move(y));
        }
    }
    return trace;
}

MlpGrads mlp_gradients(const MlpTrace& trace, const ClassifierParams& params, double d_margin) {
    MlpGrads grads{ClassifierParams::zeros_like(params), {}};
    std::vector<double> upstream{d_margin};  // gradient w.r.t. the layer's pre-activation
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        const auto& x = trace.activations[l];
        const Tensor2& w = params.weights[l];
        std::vector<double> dx(w.cols(), 0.0);
        for (std::size_t j = 0; j < w.rows(); ++j) {
            const double g = upstream[j];
            if (g == 0.0) continue;
            grads.params.biases[l](j, 0) += g;
            axpy(g, x, grads.params.weights[l].row(j));
            axpy(g, w.row(j), dx);
        }
        if (l > 0) {
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= x[i] * (1.0 - x[i]);
        }
        upstream = std::move(dx);
    }
    grads.input = std::move(upstream);
    return grads;
}

double classification_loss(std::span<const double> margins, std::span<const int> labels,
                           double lambda, double theta_squared_norm) {
    if (margins.size() != labels.size()) throw ShapeError("margins and labels differ in length");
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    double loss = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        loss += labels[i] ? softplus(-margins[i]) : softplus(margins[i]);
    }
    return loss + lambda * theta_squared_norm;
}

double classification_loss_grad(double margin, int label) {
    return sigmoid(margin) - (label ? 1.0 : 0.0);
}

Label predict(double margin, double threshold) {
    return margin > threshold ? Label::Ponzi : Label::Normal;
}

}  // namespace dspsd
