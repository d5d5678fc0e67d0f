// A small differentiable per-point classifier standing in for a heavy
// segmentation backbone: featurization, an MLP with rectifier units and
// row-softmax output, macro soft Dice loss with ignore filtering, exact
// analytic gradients, SGD, the EMA teacher update, and pseudo-label
// generation. The classifier sits behind featurize/forward/gradient so a
// heavier backend can be slotted in later.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "unimix/cloud.hpp"
#include "unimix/io.hpp"
#include "unimix/rng.hpp"

namespace unimix {

// Dense row-major matrix; all the linear algebra this classifier needs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool operator==(const Matrix&) const = default;
};

enum class Feature : std::uint8_t { x, y, z, intensity, rho, rho_norm, z_norm };

struct FeatureSpec {
    std::vector<Feature> features = {Feature::x, Feature::y, Feature::z,
                                     Feature::intensity, Feature::rho,
                                     Feature::rho_norm, Feature::z_norm};

    std::size_t count() const { return features.size(); }
};

inline Matrix featurize(const PointCloud& cloud, const FeatureSpec& spec) {
    Matrix out(cloud.size(), spec.count());
    if (cloud.empty()) return out;
    CylinderCoords cyl = to_cylinder(cloud);
    NormalizedAxis rho_n = normalize_axis(cyl.rho);
    NormalizedAxis z_n = normalize_axis(cyl.z);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        double* r = out.row(i);
        for (std::size_t f = 0; f < spec.features.size(); ++f) {
            switch (spec.features[f]) {
                case Feature::x: r[f] = p.x; break;
                case Feature::y: r[f] = p.y; break;
                case Feature::z: r[f] = p.z; break;
                case Feature::intensity: r[f] = p.intensity; break;
                case Feature::rho: r[f] = cyl.rho[i]; break;
                case Feature::rho_norm: r[f] = rho_n.values[i]; break;
                case Feature::z_norm: r[f] = z_n.values[i]; break;
            }
        }
    }
    return out;
}

struct Layer {
    Matrix weights;               // out x in
    std::vector<double> biases;   // out

    bool operator==(const Layer&) const = default;
};

struct ModelParams {
    std::vector<Layer> layers;

    bool operator==(const ModelParams&) const = default;

    std::size_t input_dim() const { return layers.front().weights.cols; }
    std::size_t output_dim() const { return layers.back().weights.rows; }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("model has no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const Layer& layer = layers[l];
            if (layer.weights.rows != layer.biases.size())
                throw std::invalid_argument("layer " + std::to_string(l) +
                                            ": bias/weight shape mismatch");
            if (l > 0 && layer.weights.cols != layers[l - 1].weights.rows)
                throw std::invalid_argument("layer " + std::to_string(l) +
                                            ": input dim does not chain");
            for (double v : layer.weights.data)
                if (!std::isfinite(v))
                    throw std::invalid_argument("non-finite weight in layer " +
                                                std::to_string(l));
            for (double v : layer.biases)
                if (!std::isfinite(v))
                    throw std::invalid_argument("non-finite bias in layer " +
                                                std::to_string(l));
        }
    }
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded.
inline ModelParams init_model(std::size_t input_dim, std::size_t hidden1,
                              std::size_t hidden2, std::size_t num_classes,
                              Rng& rng) {
    auto make_layer = [&](std::size_t out, std::size_t in) {
        Layer layer;
        layer.weights = Matrix(out, in);
        layer.biases.assign(out, 0.0);
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& w : layer.weights.data) w = rng.uniform(-bound, bound);
        for (double& b : layer.biases) b = rng.uniform(-bound, bound);
        return layer;
    };
    ModelParams params;
    params.layers.push_back(make_layer(hidden1, input_dim));
    params.layers.push_back(make_layer(hidden2, hidden1));
    params.layers.push_back(make_layer(num_classes, hidden2));
    return params;
}

using ProbMatrix = Matrix;  // N x num_classes, rows sum to 1

namespace detail {

// Forward pass keeping the post-activation of every layer; the final entry
// holds softmax probabilities.
struct ForwardTrace {
    std::vector<Matrix> activations;  // activations[0] = input features
};

inline ForwardTrace forward_trace(const ModelParams& params, const Matrix& features) {
    if (features.cols != params.input_dim())
        throw std::invalid_argument("forward: feature dim " +
                                    std::to_string(features.cols) +
                                    " != model input dim " +
                                    std::to_string(params.input_dim()));
    ForwardTrace trace;
    trace.activations.reserve(params.layers.size() + 1);
    trace.activations.push_back(features);
    const Matrix* cur = &trace.activations.back();
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        const bool last = (l + 1 == params.layers.size());
        Matrix next(cur->rows, layer.weights.rows);
        for (std::size_t i = 0; i < cur->rows; ++i) {
            const double* in = cur->row(i);
            double* out = next.row(i);
            for (std::size_t o = 0; o < layer.weights.rows; ++o) {
                const double* w = layer.weights.row(o);
                double acc = layer.biases[o];
                for (std::size_t j = 0; j < layer.weights.cols; ++j)
                    acc += w[j] * in[j];
                out[o] = last ? acc : std::max(0.0, acc);
            }
            if (last) {
                // row softmax, max-shifted for stability
                double mx = out[0];
                for (std::size_t o = 1; o < next.cols; ++o) mx = std::max(mx, out[o]);
                double sum = 0.0;
                for (std::size_t o = 0; o < next.cols; ++o) {
                    out[o] = std::exp(out[o] - mx);
                    sum += out[o];
                }
                for (std::size_t o = 0; o < next.cols; ++o) out[o] /= sum;
            }
        }
        trace.activations.push_back(std::move(next));
        cur = &trace.activations.back();
    }
    return trace;
}

}  // namespace detail

inline ProbMatrix forward(const ModelParams& params, const Matrix& features) {
    return detail::forward_trace(params, features).activations.back();
}

struct DiceResult {
    double loss = 0.0;
    bool all_ignored = false;
};

// Macro soft Dice over the classes carrying any probability or label mass,
// ignore-labeled rows excluded from every sum.
inline DiceResult dice_loss(const ProbMatrix& probs, const LabelArray& labels,
                            double epsilon = 1.0) {
    if (probs.rows != labels.size())
        throw std::invalid_argument("dice_loss: probs/labels length mismatch");
    const std::size_t C = probs.cols;
    std::vector<double> inter(C, 0.0), pred_sum(C, 0.0), label_sum(C, 0.0);
    std::size_t counted = 0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        std::uint16_t y = labels.labels[i];
        if (y == labels.ignore_id) continue;
        if (y >= C)
            throw std::invalid_argument("dice_loss: label " + std::to_string(y) +
                                        " outside class range");
        ++counted;
        const double* p = probs.row(i);
        for (std::size_t c = 0; c < C; ++c) pred_sum[c] += p[c];
        inter[y] += p[y];
        label_sum[y] += 1.0;
    }
    if (counted == 0) return {0.0, true};
    double dice_sum = 0.0;
    std::size_t included = 0;
    for (std::size_t c = 0; c < C; ++c) {
        if (pred_sum[c] == 0.0 && label_sum[c] == 0.0) continue;
        dice_sum += (2.0 * inter[c] + epsilon) /
                    (pred_sum[c] + label_sum[c] + epsilon);
        ++included;
    }
    return {1.0 - dice_sum / static_cast<double>(included), false};
}

// Exact analytic gradient of dice_loss(forward(params, features), labels)
// with respect to every parameter; shape mirrors ModelParams. loss_out,
// when given, receives the loss from the same forward pass.
inline ModelParams gradient(const ModelParams& params, const Matrix& features,
                            const LabelArray& labels, double epsilon = 1.0,
                            double* loss_out = nullptr) {
    params.validate();
    detail::ForwardTrace trace = detail::forward_trace(params, features);
    const ProbMatrix& probs = trace.activations.back();
    const std::size_t C = probs.cols;
    const std::size_t N = probs.rows;

    ModelParams grads;
    grads.layers.reserve(params.layers.size());
    for (const Layer& layer : params.layers) {
        Layer g;
        g.weights = Matrix(layer.weights.rows, layer.weights.cols);
        g.biases.assign(layer.biases.size(), 0.0);
        grads.layers.push_back(std::move(g));
    }

    // dL/dD_c terms of the Dice loss
    std::vector<double> inter(C, 0.0), pred_sum(C, 0.0), label_sum(C, 0.0);
    std::vector<std::uint8_t> active(N, 0);
    std::size_t counted = 0;
    for (std::size_t i = 0; i < N; ++i) {
        std::uint16_t y = labels.labels[i];
        if (y == labels.ignore_id) continue;
        if (y >= C)
            throw std::invalid_argument("gradient: label outside class range");
        active[i] = 1;
        ++counted;
        const double* p = probs.row(i);
        for (std::size_t c = 0; c < C; ++c) pred_sum[c] += p[c];
        inter[y] += p[y];
        label_sum[y] += 1.0;
    }
    if (counted == 0) {
        if (loss_out) *loss_out = 0.0;
        return grads;  // all ignored: zero gradient
    }

    std::vector<std::uint8_t> included(C, 0);
    std::size_t included_count = 0;
    for (std::size_t c = 0; c < C; ++c) {
        included[c] = (pred_sum[c] != 0.0 || label_sum[c] != 0.0) ? 1 : 0;
        included_count += included[c];
    }
    if (loss_out) {
        double dice_sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            if (!included[c]) continue;
            dice_sum += (2.0 * inter[c] + epsilon) /
                        (pred_sum[c] + label_sum[c] + epsilon);
        }
        *loss_out = 1.0 - dice_sum / static_cast<double>(included_count);
    }

    // dL/dp[i][c] = -(1/|C'|) * (2 g_ic * den_c - num_c) / den_c^2
    Matrix dprobs(N, C);
    const double inv_count = 1.0 / static_cast<double>(included_count);
    for (std::size_t c = 0; c < C; ++c) {
        if (!included[c]) continue;
        double num = 2.0 * inter[c] + epsilon;
        double den = pred_sum[c] + label_sum[c] + epsilon;
        double d_noty = -inv_count * (-num / (den * den));
        double d_matchy = -inv_count * ((2.0 * den - num) / (den * den));
        for (std::size_t i = 0; i < N; ++i) {
            if (!active[i]) continue;
            dprobs(i, c) = (labels.labels[i] == c) ? d_matchy : d_noty;
        }
    }

    // Back through softmax: dz_k = p_k * (dp_k - sum_c dp_c p_c)
    Matrix delta(N, C);
    for (std::size_t i = 0; i < N; ++i) {
        if (!active[i]) continue;
        const double* p = probs.row(i);
        const double* dp = dprobs.row(i);
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += dp[c] * p[c];
        double* dz = delta.row(i);
        for (std::size_t c = 0; c < C; ++c) dz[c] = p[c] * (dp[c] - dot);
    }

    // Back through the dense layers.
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Layer& layer = params.layers[l];
        const Matrix& input = trace.activations[l];
        Layer& g = grads.layers[l];
        Matrix prev_delta;
        const bool need_prev = l > 0;
        if (need_prev) prev_delta = Matrix(input.rows, layer.weights.cols);
        for (std::size_t i = 0; i < input.rows; ++i) {
            if (!active[i]) continue;
            const double* in = input.row(i);
            const double* d = delta.row(i);
            for (std::size_t o = 0; o < layer.weights.rows; ++o) {
                if (d[o] == 0.0) continue;
                double* gw = g.weights.row(o);
                for (std::size_t j = 0; j < layer.weights.cols; ++j)
                    gw[j] += d[o] * in[j];
                g.biases[o] += d[o];
            }
            if (need_prev) {
                double* pd = prev_delta.row(i);
                for (std::size_t o = 0; o < layer.weights.rows; ++o) {
                    if (d[o] == 0.0) continue;
                    const double* w = layer.weights.row(o);
                    for (std::size_t j = 0; j < layer.weights.cols; ++j)
                        pd[j] += d[o] * w[j];
                }
                // rectifier gate: the stored activation is max(0, pre)
                for (std::size_t j = 0; j < layer.weights.cols; ++j)
                    if (in[j] <= 0.0) pd[j] = 0.0;
            }
        }
        if (need_prev) delta = std::move(prev_delta);
    }
    return grads;
}

inline void sgd_step(ModelParams& params, const ModelParams& grads, double lr) {
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be > 0");
    if (grads.layers.size() != params.layers.size())
        throw std::invalid_argument("sgd_step: shape mismatch");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& p = params.layers[l];
        const Layer& g = grads.layers[l];
        if (g.weights.rows != p.weights.rows || g.weights.cols != p.weights.cols)
            throw std::invalid_argument("sgd_step: shape mismatch at layer " +
                                        std::to_string(l));
        for (double v : g.weights.data)
            if (!std::isfinite(v))
                throw std::invalid_argument("sgd_step: non-finite gradient");
        for (double v : g.biases)
            if (!std::isfinite(v))
                throw std::invalid_argument("sgd_step: non-finite gradient");
        for (std::size_t k = 0; k < p.weights.data.size(); ++k)
            p.weights.data[k] -= lr * g.weights.data[k];
        for (std::size_t k = 0; k < p.biases.size(); ++k)
            p.biases[k] -= lr * g.biases[k];
    }
}

// theta_t <- m * theta_t + (1 - m) * theta_s, elementwise.
inline void ema_update(ModelParams& teacher, const ModelParams& student, double m) {
    if (m < 0.0 || m > 1.0) throw std::invalid_argument("ema_update: m must be in [0,1]");
    if (teacher.layers.size() != student.layers.size())
        throw std::invalid_argument("ema_update: shape mismatch");
    for (std::size_t l = 0; l < teacher.layers.size(); ++l) {
        Layer& t = teacher.layers[l];
        const Layer& s = student.layers[l];
        if (t.weights.rows != s.weights.rows || t.weights.cols != s.weights.cols ||
            t.biases.size() != s.biases.size())
            throw std::invalid_argument("ema_update: shape mismatch at layer " +
                                        std::to_string(l));
        for (std::size_t k = 0; k < t.weights.data.size(); ++k)
            t.weights.data[k] = m * t.weights.data[k] + (1.0 - m) * s.weights.data[k];
        for (std::size_t k = 0; k < t.biases.size(); ++k)
            t.biases[k] = m * t.biases[k] + (1.0 - m) * s.biases[k];
    }
}

// Per-point argmax of the teacher's probabilities; ties break to the lowest
// class id. With a threshold, rows whose max probability falls below it get
// the ignore id.
inline LabelArray pseudo_labels(const ModelParams& teacher, const PointCloud& cloud,
                                const FeatureSpec& spec, std::uint16_t num_classes,
                                std::uint16_t ignore_id,
                                std::optional<double> conf_threshold = std::nullopt) {
    ProbMatrix probs = forward(teacher, featurize(cloud, spec));
    LabelArray out;
    out.num_classes = num_classes;
    out.ignore_id = ignore_id;
    out.labels.resize(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (p[c] > p[best]) best = c;
        if (conf_threshold && p[best] < *conf_threshold)
            out.labels[i] = ignore_id;
        else
            out.labels[i] = static_cast<std::uint16_t>(best);
    }
    return out;
}

// Checkpoint: magic, version, layer count, per-layer shape table, then the
// parameters as little-endian float32. Weights row-major, then biases.
inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::vector<std::uint8_t> bytes;
    auto push_u32 = [&](std::uint32_t v) {
        std::uint8_t b[4];
        detail::encode_u32_le(v, b);
        bytes.insert(bytes.end(), b, b + 4);
    };
    auto push_f32 = [&](double v) {
        std::uint8_t b[4];
        detail::encode_f32_le(static_cast<float>(v), b);
        bytes.insert(bytes.end(), b, b + 4);
    };
    bytes.insert(bytes.end(), {'U', 'M', 'C', 'K'});
    push_u32(1);  // version
    push_u32(static_cast<std::uint32_t>(params.layers.size()));
    for (const Layer& layer : params.layers) {
        push_u32(static_cast<std::uint32_t>(layer.weights.rows));
        push_u32(static_cast<std::uint32_t>(layer.weights.cols));
    }
    for (const Layer& layer : params.layers) {
        for (double v : layer.weights.data) push_f32(v);
        for (double v : layer.biases) push_f32(v);
    }
    detail::write_file_bytes(path, bytes);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
        if (off + n > bytes.size())
            throw std::runtime_error("checkpoint '" + path + "' truncated at byte " +
                                     std::to_string(off));
    };
    need(4);
    if (std::memcmp(bytes.data(), "UMCK", 4) != 0)
        throw std::runtime_error("checkpoint '" + path + "' has bad magic");
    off = 4;
    auto read_u32 = [&]() {
        need(4);
        std::uint32_t v = detail::decode_u32_le(bytes.data() + off);
        off += 4;
        return v;
    };
    std::uint32_t version = read_u32();
    if (version != 1)
        throw std::runtime_error("checkpoint '" + path + "' has unsupported version " +
                                 std::to_string(version));
    std::uint32_t num_layers = read_u32();
    ModelParams params;
    params.layers.resize(num_layers);
    for (Layer& layer : params.layers) {
        std::uint32_t rows = read_u32();
        std::uint32_t cols = read_u32();
        layer.weights = Matrix(rows, cols);
        layer.biases.assign(rows, 0.0);
    }
    for (Layer& layer : params.layers) {
        for (double& v : layer.weights.data) {
            need(4);
            v = detail::decode_f32_le(bytes.data() + off);
            off += 4;
        }
        for (double& v : layer.biases) {
            need(4);
            v = detail::decode_f32_le(bytes.data() + off);
            off += 4;
        }
    }
    if (off != bytes.size())
        throw std::runtime_error("checkpoint '" + path + "' has trailing bytes");
    params.validate();
    return params;
}

}  // namespace unimix
