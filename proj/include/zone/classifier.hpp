#pragma once

// Instruction action classifier: Linear(768 -> 128) -> ReLU -> Linear(128 -> 3),
// trained full-batch with softmax cross-entropy and Adam.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "zone/denoise.hpp"
#include "zone/error.hpp"
#include "zone/random.hpp"
#include "zone/ztf.hpp"

namespace zone {

inline constexpr std::size_t kEmbeddingDim = 768;
inline constexpr std::size_t kHiddenDim = 128;
inline constexpr std::size_t kActionCount = 3;

/// Weights of the two-layer perceptron. W1 is hidden x input, W2 is
/// classes x hidden, both row-major.
template <class T>
struct MlpParams {
    std::size_t input_dim = kEmbeddingDim;
    std::size_t hidden_dim = kHiddenDim;
    std::size_t classes = kActionCount;
    std::vector<T> w1, b1, w2, b2;

    static MlpParams zeros(std::size_t in = kEmbeddingDim, std::size_t hidden = kHiddenDim,
                           std::size_t out = kActionCount) {
        return {in, hidden, out, std::vector<T>(hidden * in), std::vector<T>(hidden), std::vector<T>(out * hidden),
                std::vector<T>(out)};
    }

    /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    static MlpParams initialize(std::uint64_t seed, std::size_t in = kEmbeddingDim,
                                std::size_t hidden = kHiddenDim, std::size_t out = kActionCount) {
        auto p = zeros(in, hidden, out);
        auto fill = [seed](std::vector<T>& v, std::uint64_t stream, std::size_t fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            CounterRng rng(seed, stream);
            for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
        };
        fill(p.w1, 1, in);
        fill(p.b1, 2, in);
        fill(p.w2, 3, hidden);
        fill(p.b2, 4, hidden);
        return p;
    }

    void validate() const {
        if (input_dim == 0 || hidden_dim == 0 || classes == 0) throw ShapeError("classifier dims must be positive");
        if (w1.size() != hidden_dim * input_dim || b1.size() != hidden_dim || w2.size() != classes * hidden_dim ||
            b2.size() != classes)
            throw ShapeError("classifier parameter shapes do not match their dims");
    }

    bool same_shape(const MlpParams& o) const noexcept {
        return input_dim == o.input_dim && hidden_dim == o.hidden_dim && classes == o.classes;
    }

    template <class U>
    MlpParams<U> cast() const {
        auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
        return {input_dim, hidden_dim, classes, conv(w1), conv(b1), conv(w2), conv(b2)};
    }

    std::size_t parameter_count() const noexcept { return w1.size() + b1.size() + w2.size() + b2.size(); }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

using ClassifierParams = MlpParams<double>;

template <class T>
std::vector<T> forward(const MlpParams<T>& p, std::span<const T> x) {
    if (x.size() != p.input_dim) throw ShapeError("forward: embedding has wrong length");
    std::vector<T> hidden(p.hidden_dim);
    for (std::size_t j = 0; j < p.hidden_dim; ++j) {
        T acc = p.b1[j];
        const T* row = &p.w1[j * p.input_dim];
        for (std::size_t i = 0; i < p.input_dim; ++i) acc += row[i] * x[i];
        hidden[j] = acc > T(0) ? acc : T(0);
    }
    std::vector<T> logits(p.classes);
    for (std::size_t k = 0; k < p.classes; ++k) {
        T acc = p.b2[k];
        for (std::size_t j = 0; j < p.hidden_dim; ++j) acc += p.w2[k * p.hidden_dim + j] * hidden[j];
        logits[k] = acc;
    }
    return logits;
}

/// Index of the largest logit; ties resolve to the lowest index.
template <class T>
std::size_t argmax(std::span<const T> logits) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = k;
    return best;
}

template <class T>
EditAction classify(const MlpParams<T>& p, std::span<const T> embedding) {
    if (p.classes != kActionCount) throw ShapeError("classify: model must have 3 outputs");
    const auto logits = forward(p, embedding);
    return action_from_label(static_cast<int>(argmax<T>(logits)));
}

struct LabeledEmbedding {
    std::vector<double> embedding;
    int label = 0;  // 0 change, 1 add, 2 remove
};

/// Row-major N x D features with integer labels.
struct Dataset {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    static Dataset from(std::span<const LabeledEmbedding> samples) {
        if (samples.empty()) throw Error("dataset is empty");
        Dataset d{samples.front().embedding.size(), {}, {}};
        for (const auto& s : samples) {
            if (s.embedding.size() != d.dim) throw ShapeError("embeddings differ in width");
            d.features.insert(d.features.end(), s.embedding.begin(), s.embedding.end());
            d.labels.push_back(s.label);
        }
        return d;
    }

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> row(std::size_t i) const noexcept {
        return std::span<const double>(features).subspan(i * dim, dim);
    }
    void validate(std::size_t classes = kActionCount) const {
        if (labels.empty()) throw Error("dataset is empty");
        if (features.size() != labels.size() * dim) throw ShapeError("dataset features/labels mismatch");
        for (int l : labels)
            if (l < 0 || static_cast<std::size_t>(l) >= classes) throw Error("dataset label out of range");
    }
};

/// Four-lane dot product; fixed summation order, so results are reproducible.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

struct LossAndGrad {
    double loss = 0.0;
    ClassifierParams grad;
};

/// Mean softmax cross-entropy and its exact gradient by backpropagation.
inline LossAndGrad loss_and_grad(const ClassifierParams& p, const Dataset& batch) {
    p.validate();
    batch.validate(p.classes);
    if (batch.dim != p.input_dim) throw ShapeError("loss_and_grad: feature width does not match the model");
    const std::size_t n = batch.size(), in = p.input_dim, hid = p.hidden_dim, out = p.classes;
    LossAndGrad r{0.0, ClassifierParams::zeros(in, hid, out)};
    std::vector<double> pre(hid), act(hid), prob(out), dlogit(out), dhid(hid);
    const double inv_n = 1.0 / static_cast<double>(n);

    for (std::size_t s = 0; s < n; ++s) {
        const auto x = batch.row(s);
        for (std::size_t j = 0; j < hid; ++j) {
            const double acc = p.b1[j] + dot(&p.w1[j * in], x.data(), in);
            pre[j] = acc;
            act[j] = acc > 0.0 ? acc : 0.0;
        }
        double peak = -INFINITY;
        for (std::size_t k = 0; k < out; ++k) {
            double acc = p.b2[k];
            for (std::size_t j = 0; j < hid; ++j) acc += p.w2[k * hid + j] * act[j];
            prob[k] = acc;
            peak = std::max(peak, acc);
        }
        const auto y = static_cast<std::size_t>(batch.labels[s]);
        const double logit_y = prob[y];
        double z = 0.0;
        for (auto& v : prob) z += (v = std::exp(v - peak));
        for (auto& v : prob) v /= z;
        r.loss += (std::log(z) + peak - logit_y) * inv_n;

        for (std::size_t k = 0; k < out; ++k) dlogit[k] = (prob[k] - (k == y ? 1.0 : 0.0)) * inv_n;
        std::fill(dhid.begin(), dhid.end(), 0.0);
        for (std::size_t k = 0; k < out; ++k) {
            r.grad.b2[k] += dlogit[k];
            for (std::size_t j = 0; j < hid; ++j) {
                r.grad.w2[k * hid + j] += dlogit[k] * act[j];
                dhid[j] += p.w2[k * hid + j] * dlogit[k];
            }
        }
        for (std::size_t j = 0; j < hid; ++j) {
            if (pre[j] <= 0.0) continue;
            r.grad.b1[j] += dhid[j];
            double* g = &r.grad.w1[j * in];
            for (std::size_t i = 0; i < in; ++i) g[i] += dhid[j] * x[i];
        }
    }
    return r;
}

/// Mean softmax cross-entropy only.
inline double loss(const ClassifierParams& p, const Dataset& batch) {
    batch.validate(p.classes);
    double total = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto logits = forward<double>(p, batch.row(s));
        const double peak = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double v : logits) z += std::exp(v - peak);
        total += std::log(z) + peak - logits[static_cast<std::size_t>(batch.labels[s])];
    }
    return total / static_cast<double>(batch.size());
}

struct AdamState {
    double learning_rate = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    ClassifierParams first_moment;
    ClassifierParams second_moment;

    static AdamState for_params(const ClassifierParams& p, double lr = 0.1) {
        AdamState s;
        s.learning_rate = lr;
        s.first_moment = ClassifierParams::zeros(p.input_dim, p.hidden_dim, p.classes);
        s.second_moment = s.first_moment;
        return s;
    }
};

/// Scalar bias-corrected Adam update for one parameter. Exposed so flat
/// parameter vectors and the MLP share one code path.
inline double adam_update(double param, double grad, double& m, double& v, std::size_t t, const AdamState& s) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(s.beta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(s.beta2, static_cast<double>(t)));
    return param - s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
}

inline void adam_step(ClassifierParams& params, const ClassifierParams& grads, AdamState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
        !params.same_shape(state.second_moment))
        throw ShapeError("adam_step: shape mismatch");
    params.validate();
    grads.validate();
    const std::size_t t = ++state.step;
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = adam_update(p[i], g[i], m[i], v[i], t, state);
    };
    update(params.w1, grads.w1, state.first_moment.w1, state.second_moment.w1);
    update(params.b1, grads.b1, state.first_moment.b1, state.second_moment.b1);
    update(params.w2, grads.w2, state.first_moment.w2, state.second_moment.w2);
    update(params.b2, grads.b2, state.first_moment.b2, state.second_moment.b2);
}

inline double accuracy(const ClassifierParams& p, const Dataset& data) {
    data.validate(p.classes);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto logits = forward<double>(p, data.row(s));
        hits += argmax<double>(logits) == static_cast<std::size_t>(data.labels[s]);
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    std::size_t hidden_dim = kHiddenDim;
};

struct TrainResult {
    ClassifierParams params;
    std::vector<double> epoch_loss;  // full-batch loss before each epoch's update
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// Full-batch training: one Adam step per epoch over the whole train split.
inline TrainResult train(const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg) {
    if (train_set.labels.empty()) throw Error("train: missing train split");
    if (test_set.labels.empty()) throw Error("train: missing test split");
    train_set.validate();
    test_set.validate();
    if (train_set.dim != test_set.dim) throw ShapeError("train: splits disagree on embedding width");
    if (cfg.epochs < 0) throw Error("train: epochs must be non-negative");

    TrainResult r;
    r.params = ClassifierParams::initialize(cfg.seed, train_set.dim, cfg.hidden_dim, kActionCount);
    AdamState state = AdamState::for_params(r.params, cfg.learning_rate);
    for (int e = 0; e < cfg.epochs; ++e) {
        auto lg = loss_and_grad(r.params, train_set);
        r.epoch_loss.push_back(lg.loss);
        adam_step(r.params, lg.grad, state);
    }
    r.train_accuracy = accuracy(r.params, train_set);
    r.test_accuracy = accuracy(r.params, test_set);
    return r;
}

/// Unit directions of the three class means: orthonormalized Gaussian
/// vectors drawn from `seed`.
inline std::vector<std::vector<double>> blob_directions(std::uint64_t seed, std::size_t dim = kEmbeddingDim) {
    std::vector<std::vector<double>> dirs;
    CounterRng rng(seed, 0xB10B);
    for (std::size_t c = 0; c < kActionCount; ++c) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.normal();
        for (const auto& d : dirs) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * d[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * d[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        dirs.push_back(std::move(v));
    }
    return dirs;
}

/// Pairwise distance between blob means, in units of sigma.
inline constexpr double kBlobSeparation = 14.0;

/// One sample around class `label`'s mean with per-coordinate sigma
/// 1/sqrt(dim), so embeddings have roughly unit norm. Means are pairwise
/// `separation` sigmas apart.
inline std::vector<double> blob_sample(const std::vector<std::vector<double>>& dirs, int label, CounterRng& rng,
                                       double separation = kBlobSeparation) {
    const double radius = separation / std::sqrt(2.0);
    const auto& dir = dirs.at(static_cast<std::size_t>(label));
    const double sigma = 1.0 / std::sqrt(static_cast<double>(dir.size()));
    std::vector<double> x(dir.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = sigma * (radius * dir[i] + rng.normal());
    return x;
}

/// Three Gaussian blobs around orthonormal mean directions.
/// Labels cycle 0, 1, 2; `stream` separates splits drawn from one seed.
inline Dataset make_blob_dataset(std::uint64_t seed, std::size_t per_class, std::uint64_t stream,
                                 std::size_t dim = kEmbeddingDim, double separation = kBlobSeparation) {
    const auto dirs = blob_directions(seed, dim);
    Dataset d{dim, {}, {}};
    d.features.reserve(per_class * kActionCount * dim);
    CounterRng rng(seed, stream);
    for (std::size_t s = 0; s < per_class * kActionCount; ++s) {
        const int c = static_cast<int>(s % kActionCount);
        const auto x = blob_sample(dirs, c, rng, separation);
        d.features.insert(d.features.end(), x.begin(), x.end());
        d.labels.push_back(c);
    }
    return d;
}

struct BlobSplits {
    Dataset train;
    Dataset test;
};

inline constexpr std::uint64_t kFixtureDatasetSeed = 7;

/// The synthetic fixture dataset: 150 train and 50 test samples per class.
inline BlobSplits make_fixture_splits(std::uint64_t seed = kFixtureDatasetSeed) {
    return {make_blob_dataset(seed, 150, 1), make_blob_dataset(seed, 50, 2)};
}

// Dataset files: <stem>.ztf (rank-2 N x D) and <stem>.labels (one integer per line).

inline void write_dataset(const Dataset& d, const std::filesystem::path& stem) {
    d.validate();
    write_tensor(Grid2D(d.size(), d.dim, std::vector<float>(d.features.begin(), d.features.end())),
                 stem.string() + ".ztf");
    std::ofstream os(stem.string() + ".labels", std::ios::trunc);
    for (int l : d.labels) os << l << '\n';
    if (!os) throw Error("cannot write labels for " + stem.string());
}

inline Dataset read_dataset(const std::filesystem::path& stem) {
    const Grid2D x = read_grid2d(stem.string() + ".ztf");
    std::ifstream is(stem.string() + ".labels");
    if (!is) throw Error("missing label file " + stem.string() + ".labels");
    Dataset d{x.width(), std::vector<double>(x.values().begin(), x.values().end()), {}};
    int l;
    while (is >> l) d.labels.push_back(l);
    if (!is.eof()) throw FormatError(stem.string() + ".labels: non-integer label");
    if (d.labels.size() != x.height()) throw FormatError(stem.string() + ": label count does not match rows");
    d.validate();
    return d;
}

// Model directory: manifest.json plus w1.ztf, b1.ztf, w2.ztf, b2.ztf (biases
// stored as 1 x n rows), float32.

inline void save_classifier(const ClassifierParams& p, const std::filesystem::path& dir) {
    p.validate();
    std::filesystem::create_directories(dir);
    auto put = [&](const std::vector<double>& v, std::size_t rows, std::size_t cols, const char* name) {
        write_tensor(Grid2D(rows, cols, std::vector<float>(v.begin(), v.end())), dir / name);
    };
    put(p.w1, p.hidden_dim, p.input_dim, "w1.ztf");
    put(p.b1, 1, p.hidden_dim, "b1.ztf");
    put(p.w2, p.classes, p.hidden_dim, "w2.ztf");
    put(p.b2, 1, p.classes, "b2.ztf");
    const nlohmann::json doc{{"input_dim", p.input_dim},
                             {"hidden_dim", p.hidden_dim},
                             {"classes", p.classes},
                             {"labels", {"change", "add", "remove"}},
                             {"tensors", {{"w1", "w1.ztf"}, {"b1", "b1.ztf"}, {"w2", "w2.ztf"}, {"b2", "b2.ztf"}}}};
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << doc.dump(2) << '\n';
    if (!os) throw Error("cannot write classifier manifest in " + dir.string());
}

inline MlpParams<float> load_classifier(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw Error("missing classifier manifest in " + dir.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
        auto p = MlpParams<float>::zeros(doc.at("input_dim").get<std::size_t>(), doc.at("hidden_dim").get<std::size_t>(),
                                         doc.at("classes").get<std::size_t>());
        auto take = [&](const char* key, std::vector<float>& dst, std::size_t rows, std::size_t cols) {
            const Grid2D g = read_grid2d(dir / doc.at("tensors").at(key).get<std::string>());
            if (g.height() != rows || g.width() != cols)
                throw ShapeError(std::string("classifier tensor ") + key + " has the wrong shape");
            dst.assign(g.values().begin(), g.values().end());
        };
        take("w1", p.w1, p.hidden_dim, p.input_dim);
        take("b1", p.b1, 1, p.hidden_dim);
        take("w2", p.w2, p.classes, p.hidden_dim);
        take("b2", p.b2, 1, p.classes);
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "manifest.json").string() + ": " + e.what());
    }
}

}  // namespace zone
