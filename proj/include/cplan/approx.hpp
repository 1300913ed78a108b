#pragma once

// Dense feedforward networks with reverse-mode gradients and Adam.
//
// Batches are row-major in the sense that each row is one example. Weights
// are stored as (fan_in x fan_out) so a layer computes H = X * W + b.

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cplan/core.hpp"

namespace cplan {

enum class OutputActivation { Identity, Logistic, Tanh };

inline const char* to_string(OutputActivation a) {
    switch (a) {
        case OutputActivation::Identity: return "identity";
        case OutputActivation::Logistic: return "logistic";
        case OutputActivation::Tanh: return "tanh";
    }
    return "identity";
}

inline OutputActivation output_activation_from_string(const std::string& s) {
    if (s == "identity") return OutputActivation::Identity;
    if (s == "logistic") return OutputActivation::Logistic;
    if (s == "tanh") return OutputActivation::Tanh;
    throw ParseError("unknown output activation: " + s);
}

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct Layer {
    Matrix<Scalar> weight;  // fan_in x fan_out
    RowVector<Scalar> bias;
};

// A parameter-shaped bundle; used for weights, gradients and Adam moments alike.
template <typename Scalar>
struct Params {
    std::vector<Layer<Scalar>> layers;

    static Params zeros_like(const Params& other) {
        Params p;
        for (const auto& l : other.layers)
            p.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                                RowVector<Scalar>::Zero(l.bias.size())});
        return p;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& l : layers)
            s += static_cast<double>(l.weight.squaredNorm()) + static_cast<double>(l.bias.squaredNorm());
        return s;
    }

    double norm() const { return std::sqrt(squared_norm()); }

    // Visit every scalar in a fixed order (layer by layer, weights column-major, then biases).
    template <typename F>
    void for_each(F&& f) {
        for (auto& l : layers) {
            for (Eigen::Index i = 0; i < l.weight.size(); ++i) f(l.weight.data()[i]);
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
        }
    }

    bool same_shape(const Params& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].weight.rows() != o.layers[i].weight.rows() ||
                layers[i].weight.cols() != o.layers[i].weight.cols())
                return false;
        return true;
    }
};

template <typename Scalar>
struct ForwardCache {
    std::vector<Matrix<Scalar>> inputs;  // input to each layer
    std::vector<Matrix<Scalar>> pre;     // pre-activation of each layer
    Matrix<Scalar> output;
};

template <typename Scalar>
struct Backward {
    Params<Scalar> grads;
    Matrix<Scalar> input_grad;  // dL/dinput, batch x input width
};

template <typename Scalar = double>
class Mlp {
   public:
    Mlp() = default;

    Mlp(std::vector<int> layer_sizes, OutputActivation out, Rng& rng)
        : sizes_(std::move(layer_sizes)), out_(out) {
        if (sizes_.size() < 2) throw ShapeError("network needs at least input and output widths");
        for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
            const int fan_in = sizes_[i];
            const int fan_out = sizes_[i + 1];
            if (fan_in <= 0 || fan_out <= 0) throw ShapeError("layer widths must be positive");
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> u(-bound, bound);
            Layer<Scalar> l{Matrix<Scalar>(fan_in, fan_out), RowVector<Scalar>::Zero(fan_out)};
            for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = static_cast<Scalar>(u(rng));
            params_.layers.push_back(std::move(l));
        }
    }

    // Build from explicit parameters (shapes validated).
    Mlp(Params<Scalar> params, OutputActivation out) : params_(std::move(params)), out_(out) {
        if (params_.layers.empty()) throw ShapeError("network has no layers");
        sizes_.push_back(static_cast<int>(params_.layers.front().weight.rows()));
        for (const auto& l : params_.layers) {
            if (l.weight.rows() != sizes_.back()) throw ShapeError("inconsistent layer shapes");
            if (l.bias.size() != l.weight.cols()) throw ShapeError("bias width mismatch");
            sizes_.push_back(static_cast<int>(l.weight.cols()));
        }
    }

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_width() const { return sizes_.front(); }
    int output_width() const { return sizes_.back(); }
    OutputActivation output_activation() const { return out_; }
    const Params<Scalar>& params() const { return params_; }
    Params<Scalar>& params() { return params_; }

    Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
        check_input(x);
        Matrix<Scalar> h = x;
        for (std::size_t i = 0; i < params_.layers.size(); ++i) {
            const auto& l = params_.layers[i];
            Matrix<Scalar> z = h * l.weight;
            z.rowwise() += l.bias;
            h = is_last(i) ? apply_output(z) : z.cwiseMax(Scalar(0));
        }
        return h;
    }

    ForwardCache<Scalar> forward_cached(const Matrix<Scalar>& x) const {
        check_input(x);
        ForwardCache<Scalar> c;
        Matrix<Scalar> h = x;
        for (std::size_t i = 0; i < params_.layers.size(); ++i) {
            const auto& l = params_.layers[i];
            c.inputs.push_back(h);
            Matrix<Scalar> z = h * l.weight;
            z.rowwise() += l.bias;
            h = is_last(i) ? apply_output(z) : z.cwiseMax(Scalar(0));
            c.pre.push_back(std::move(z));
        }
        c.output = std::move(h);
        return c;
    }

    // Reverse pass given dL/doutput (post-activation). Rectifier derivative at 0 is 0.
    Backward<Scalar> backward(const ForwardCache<Scalar>& c, const Matrix<Scalar>& d_out,
                              bool want_input_grad = false) const {
        if (d_out.rows() != c.output.rows() || d_out.cols() != c.output.cols())
            throw ShapeError("output gradient shape mismatch");
        Backward<Scalar> b;
        b.grads = Params<Scalar>::zeros_like(params_);
        Matrix<Scalar> delta = output_derivative(c.pre.back(), c.output, d_out);
        for (std::size_t k = params_.layers.size(); k-- > 0;) {
            b.grads.layers[k].weight.noalias() = c.inputs[k].transpose() * delta;
            b.grads.layers[k].bias = delta.colwise().sum();
            if (k == 0 && !want_input_grad) break;
            Matrix<Scalar> up = delta * params_.layers[k].weight.transpose();
            if (k == 0) {
                b.input_grad = std::move(up);
                break;
            }
            delta = up.cwiseProduct((c.pre[k - 1].array() > Scalar(0)).matrix().template cast<Scalar>());
        }
        return b;
    }

   private:
    bool is_last(std::size_t i) const { return i + 1 == params_.layers.size(); }

    void check_input(const Matrix<Scalar>& x) const {
        if (x.cols() != input_width())
            throw ShapeError("input width " + std::to_string(x.cols()) + " != network input width " +
                             std::to_string(input_width()));
    }

    Matrix<Scalar> apply_output(const Matrix<Scalar>& z) const {
        switch (out_) {
            case OutputActivation::Identity: return z;
            case OutputActivation::Logistic:
                return z.unaryExpr([](Scalar v) { return static_cast<Scalar>(sigmoid(static_cast<double>(v))); });
            case OutputActivation::Tanh: return z.array().tanh().matrix();
        }
        return z;
    }

    Matrix<Scalar> output_derivative(const Matrix<Scalar>& /*z*/, const Matrix<Scalar>& y,
                                     const Matrix<Scalar>& d_out) const {
        switch (out_) {
            case OutputActivation::Identity: return d_out;
            case OutputActivation::Logistic:
                return d_out.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
            case OutputActivation::Tanh:
                return d_out.cwiseProduct((Scalar(1) - y.array().square()).matrix());
        }
        return d_out;
    }

    std::vector<int> sizes_;
    Params<Scalar> params_;
    OutputActivation out_ = OutputActivation::Identity;
};

// Loss callback: given network outputs, return the loss value and dL/doutput.
template <typename Scalar>
using LossFn = std::function<std::pair<double, Matrix<Scalar>>(const Matrix<Scalar>&)>;

template <typename Scalar>
Params<Scalar> grad(const Mlp<Scalar>& net, const LossFn<Scalar>& loss, const Matrix<Scalar>& batch) {
    const auto cache = net.forward_cached(batch);
    auto [value, d_out] = loss(cache.output);
    (void)value;
    return net.backward(cache, d_out).grads;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
    Params<Scalar> m;
    Params<Scalar> v;
    long step = 0;

    static AdamState for_params(const Params<Scalar>& p) {
        return {Params<Scalar>::zeros_like(p), Params<Scalar>::zeros_like(p), 0};
    }
};

template <typename Scalar>
void adam_step(Params<Scalar>& params, const Params<Scalar>& grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
    if (!params.same_shape(grads) || !params.same_shape(state.m)) throw ShapeError("adam: shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const auto b1 = static_cast<Scalar>(cfg.beta1);
    const auto b2 = static_cast<Scalar>(cfg.beta2);
    const auto step_size = static_cast<Scalar>(cfg.lr / bc1);
    const auto sqrt_bc2 = static_cast<Scalar>(std::sqrt(bc2));
    const auto eps = static_cast<Scalar>(cfg.eps);
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
        // p -= lr * mhat / (sqrt(vhat) + eps)
        p.array() -= step_size * m.array() / (v.array().sqrt() / sqrt_bc2 + eps);
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        update(params.layers[i].weight, grads.layers[i].weight, state.m.layers[i].weight,
               state.v.layers[i].weight);
        update(params.layers[i].bias, grads.layers[i].bias, state.m.layers[i].bias, state.v.layers[i].bias);
    }
}

// target <- (1 - tau) * target + tau * online
template <typename Scalar>
void soft_update(Params<Scalar>& target, const Params<Scalar>& online, double tau) {
    if (!target.same_shape(online)) throw ShapeError("soft_update: shape mismatch");
    const auto t = static_cast<Scalar>(tau);
    for (std::size_t i = 0; i < target.layers.size(); ++i) {
        target.layers[i].weight = (Scalar(1) - t) * target.layers[i].weight + t * online.layers[i].weight;
        target.layers[i].bias = (Scalar(1) - t) * target.layers[i].bias + t * online.layers[i].bias;
    }
}

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

// Compares reverse-mode gradients against central finite differences on a fixed
// smooth loss of the outputs. Coordinates whose +-h perturbation flips the sign
// of any rectifier input are skipped (the derivative is undefined there).
inline GradientCheckResult gradient_check(const Mlp<double>& net, const Matrix<double>& batch,
                                          std::uint64_t loss_seed = 7, double h = 1e-5) {
    Rng rng(loss_seed);
    Matrix<double> coef(batch.rows(), net.output_width());
    for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = standard_normal(rng);
    // L = sum(coef .* y) + 0.5 * sum(y^2)
    auto loss_value = [&](const Matrix<double>& y) { return coef.cwiseProduct(y).sum() + 0.5 * y.squaredNorm(); };
    LossFn<double> loss = [&](const Matrix<double>& y) { return std::make_pair(loss_value(y), Matrix<double>(coef + y)); };

    const Params<double> analytic = grad(net, loss, batch);

    auto signs = [&](const Mlp<double>& n) {
        const auto c = n.forward_cached(batch);
        std::vector<Matrix<double>> s;
        for (std::size_t k = 0; k + 1 < c.pre.size(); ++k)
            s.push_back((c.pre[k].array() > 0.0).matrix().cast<double>());
        return s;
    };

    GradientCheckResult res;
    Mlp<double> probe = net;
    std::vector<double*> coords;
    probe.params().for_each([&](double& v) { coords.push_back(&v); });
    std::vector<double> analytic_flat;
    Params<double> a_copy = analytic;
    a_copy.for_each([&](double& v) { analytic_flat.push_back(v); });

    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double orig = *coords[i];
        *coords[i] = orig + h;
        const auto s_plus = signs(probe);
        const double lp = loss_value(probe.forward(batch));
        *coords[i] = orig - h;
        const auto s_minus = signs(probe);
        const double lm = loss_value(probe.forward(batch));
        *coords[i] = orig;
        bool kink = false;
        for (std::size_t k = 0; k < s_plus.size() && !kink; ++k) kink = (s_plus[k] != s_minus[k]);
        if (kink) {
            ++res.skipped_kinks;
            continue;
        }
        const double fd = (lp - lm) / (2.0 * h);
        const double a = analytic_flat[i];
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
        res.max_relative_error = std::max(res.max_relative_error, std::abs(a - fd) / denom);
        ++res.checked;
    }
    return res;
}

// Checkpoint text format (bit-exact via hexadecimal floats):
//
//   cplan-mlp 1
//   output <identity|logistic|tanh>
//   layers <count>
//   layer <fan_in> <fan_out>
//   <fan_in*fan_out weight values, row-major, one per line>
//   <fan_out bias values, one per line>
//   ... repeated per layer
template <typename Scalar>
void write_mlp(std::ostream& os, const Mlp<Scalar>& net) {
    os << "cplan-mlp 1\n";
    os << "output " << to_string(net.output_activation()) << "\n";
    os << "layers " << net.params().layers.size() << "\n";
    char buf[64];
    auto put = [&](Scalar v) {
        std::snprintf(buf, sizeof buf, "%a\n", static_cast<double>(v));
        os << buf;
    };
    for (const auto& l : net.params().layers) {
        os << "layer " << l.weight.rows() << " " << l.weight.cols() << "\n";
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put(l.weight(r, c));
        for (Eigen::Index c = 0; c < l.bias.size(); ++c) put(l.bias(c));
    }
}

template <typename Scalar>
Mlp<Scalar> read_mlp(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "cplan-mlp" || version != 1) throw ParseError("not a cplan-mlp v1 stream");
    std::string key, act;
    if (!(is >> key >> act) || key != "output") throw ParseError("missing output activation");
    std::size_t n = 0;
    if (!(is >> key >> n) || key != "layers") throw ParseError("missing layer count");
    auto get = [&]() {
        std::string tok;
        if (!(is >> tok)) throw ParseError("truncated checkpoint");
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') throw ParseError("bad number: " + tok);
        return static_cast<Scalar>(v);
    };
    Params<Scalar> p;
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index rows = 0, cols = 0;
        if (!(is >> key >> rows >> cols) || key != "layer" || rows <= 0 || cols <= 0)
            throw ParseError("bad layer header");
        Layer<Scalar> l{Matrix<Scalar>(rows, cols), RowVector<Scalar>(cols)};
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = get();
        for (Eigen::Index c = 0; c < cols; ++c) l.bias(c) = get();
        p.layers.push_back(std::move(l));
    }
    return Mlp<Scalar>(std::move(p), output_activation_from_string(act));
}

template <typename Scalar>
void save_mlp(const std::string& path, const Mlp<Scalar>& net) {
    std::ofstream f(path);
    if (!f) throw UsageError("cannot write checkpoint: " + path);
    write_mlp(f, net);
}

template <typename Scalar>
Mlp<Scalar> load_mlp(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read checkpoint: " + path);
    return read_mlp<Scalar>(f);
}

}  // namespace cplan
