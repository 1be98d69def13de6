#include "slb/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace slb::learn {

using nlohmann::json;

void require_finite(const Matrix& x, const char* what) {
    if (!x.allFinite()) throw std::invalid_argument(std::string(what) + " contains NaN or infinite values");
}

// ---------------------------------------------------------------- standardizer

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows() == 0) throw std::invalid_argument("cannot standardize an empty matrix");
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double var = (x.col(c).array() - s.mean(c)).square().mean();
        const double sd = std::sqrt(var);
        s.scale(c) = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

Matrix Standardizer::transform(const Matrix& x) const {
    if (x.cols() != mean.size()) throw std::invalid_argument("feature count does not match the standardizer");
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

Matrix Standardizer::inverse(const Matrix& z) const {
    return ((z.array().rowwise() * scale.array()).matrix().rowwise() + mean);
}

RowVector Standardizer::transform_row(std::span<const double> row) const {
    if (static_cast<Eigen::Index>(row.size()) != mean.size()) {
        throw std::invalid_argument("input has " + std::to_string(row.size()) + " features, expected " +
                                    std::to_string(mean.size()));
    }
    RowVector out(mean.size());
    for (Eigen::Index c = 0; c < mean.size(); ++c) out(c) = (row[c] - mean(c)) / scale(c);
    return out;
}

namespace {

json row_to_json(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RowVector row_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    RowVector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(row_to_json(m.row(r)));
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) throw std::invalid_argument("ragged matrix in JSON");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

json standardizer_to_json(const Standardizer& s) {
    return {{"mean", row_to_json(s.mean)}, {"scale", row_to_json(s.scale)}};
}

Standardizer standardizer_from_json(const json& j) {
    return {row_from_json(j.at("mean")), row_from_json(j.at("scale"))};
}

// Dropout masks only need cheap, reproducible bits.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

void softmax_rows(Matrix& logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

// Forward and backward pass. `dropout` is null for deterministic passes.
double forward_backward(const std::vector<DenseLayer>& layers, const Matrix& x, std::span<const int> labels,
                        double l2, std::vector<DenseLayer>& grad, SplitMix64* dropout, double dropout_rate) {
    const auto n = x.rows();
    const std::size_t depth = layers.size();
    std::vector<Matrix> acts;
    std::vector<Matrix> gates;
    acts.reserve(depth);
    gates.reserve(depth - 1);
    acts.push_back(x);
    const double keep = 1.0 - dropout_rate;
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        Matrix z = acts.back() * layers[l].weights;
        z.rowwise() += layers[l].bias;
        Matrix gate(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            double g = z.data()[i] > 0.0 ? 1.0 : 0.0;
            if (dropout && dropout_rate > 0.0) g = dropout->uniform() < keep ? g / keep : 0.0;
            gate.data()[i] = g;
        }
        acts.push_back(z.cwiseProduct(gate));
        gates.push_back(std::move(gate));
    }
    Matrix probs = acts.back() * layers.back().weights;
    probs.rowwise() += layers.back().bias;
    softmax_rows(probs);

    double loss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) loss -= std::log(std::max(probs(r, labels[r]), 1e-300));
    loss /= static_cast<double>(n);

    Matrix delta = probs;
    for (Eigen::Index r = 0; r < n; ++r) delta(r, labels[r]) -= 1.0;
    delta /= static_cast<double>(n);

    grad.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        grad[l].weights.noalias() = acts[l].transpose() * delta;
        grad[l].bias = delta.colwise().sum();
        if (l > 0) {
            Matrix back = delta * layers[l].weights.transpose();
            delta = back.cwiseProduct(gates[l - 1]);
        }
    }
    if (l2 > 0.0) {
        for (std::size_t l = 0; l < depth; ++l) {
            loss += 0.5 * l2 * (layers[l].weights.squaredNorm() + layers[l].bias.squaredNorm());
            grad[l].weights += l2 * layers[l].weights;
            grad[l].bias += l2 * layers[l].bias;
        }
    }
    return loss;
}

}  // namespace

// ------------------------------------------------------------------ mlp config

void MlpConfig::validate() const {
    if (layer_widths.empty()) throw std::invalid_argument("MLP needs at least one hidden layer");
    for (int w : layer_widths) {
        if (w <= 0) throw std::invalid_argument("layer widths must be positive");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(weight_decay >= 0.0) || !(l2_penalty >= 0.0)) throw std::invalid_argument("decay must be non-negative");
    if (epochs <= 0 || batch_size <= 0) throw std::invalid_argument("epochs and batch size must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
}

json to_json(const MlpConfig& c) {
    return {{"layer_widths", c.layer_widths}, {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
            {"l2_penalty", c.l2_penalty},     {"epochs", c.epochs},               {"batch_size", c.batch_size},
            {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

MlpConfig mlp_config_from_json(const json& j, MlpConfig c) {
    c.layer_widths = j.value("layer_widths", c.layer_widths);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.l2_penalty = j.value("l2_penalty", c.l2_penalty);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

// ------------------------------------------------------------------------ mlp

Mlp::Mlp(int n_inputs, const std::vector<int>& hidden, int n_outputs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    int fan_in = n_inputs;
    auto add = [&](int fan_out) {
        std::normal_distribution<double> init(0.0, std::sqrt(2.0 / fan_in));
        DenseLayer layer;
        layer.weights.resize(fan_in, fan_out);
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = init(rng);
        layer.bias = RowVector::Zero(fan_out);
        layers_.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (int w : hidden) add(w);
    add(n_outputs);
}

int Mlp::n_inputs() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.rows()); }
int Mlp::n_outputs() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.cols()); }

Matrix Mlp::probabilities(const Matrix& x) const {
    Matrix a = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        Matrix z = a * layers_[l].weights;
        z.rowwise() += layers_[l].bias;
        a = z.cwiseMax(0.0);
    }
    Matrix logits = a * layers_.back().weights;
    logits.rowwise() += layers_.back().bias;
    softmax_rows(logits);
    return logits;
}

double Mlp::loss_and_gradient(const Matrix& x, std::span<const int> labels, double l2,
                              std::vector<DenseLayer>& grad) const {
    return forward_backward(layers_, x, labels, l2, grad, nullptr, 0.0);
}

std::vector<double> Mlp::flat_parameters() const {
    std::vector<double> out;
    for (const auto& l : layers_) {
        out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

void Mlp::set_flat_parameters(std::span<const double> p) {
    std::size_t at = 0;
    for (auto& l : layers_) {
        const auto nw = static_cast<std::size_t>(l.weights.size());
        const auto nb = static_cast<std::size_t>(l.bias.size());
        if (at + nw + nb > p.size()) throw std::invalid_argument("parameter vector too short");
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(at), nw, l.weights.data());
        at += nw;
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(at), nb, l.bias.data());
        at += nb;
    }
    if (at != p.size()) throw std::invalid_argument("parameter vector too long");
}

// ----------------------------------------------------------------- classifier

Prediction Classifier::predict(std::span<const double> input) const {
    Matrix row = standardizer_.transform_row(input);
    const Matrix p = net_.probabilities(row);
    Prediction out;
    out.probabilities.assign(p.data(), p.data() + p.size());
    out.label = 0;
    for (int c = 1; c < n_classes_; ++c) {
        if (out.probabilities[c] > out.probabilities[out.label]) out.label = c;
    }
    return out;
}

Matrix Classifier::predict_probabilities(const Matrix& x) const {
    return net_.probabilities(standardizer_.transform(x));
}

std::vector<int> Classifier::predict_labels(const Matrix& x) const {
    const Matrix p = predict_probabilities(x);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < n_classes_; ++c) {
            if (p(r, c) > p(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

double Classifier::accuracy(const Matrix& x, std::span<const int> labels) const {
    if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
        throw std::invalid_argument("accuracy needs one label per row");
    }
    const auto pred = predict_labels(x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

json Classifier::to_json() const {
    json layers = json::array();
    for (const auto& l : net_.layers()) {
        layers.push_back({{"weights", matrix_to_json(l.weights)}, {"bias", row_to_json(l.bias)}});
    }
    return {{"kind", "mlp_classifier"},
            {"config", learn::to_json(config_)},
            {"n_classes", n_classes_},
            {"degenerate", degenerate_},
            {"standardizer", standardizer_to_json(standardizer_)},
            {"layers", layers}};
}

Classifier Classifier::from_json(const json& j) {
    if (j.value("kind", std::string()) != "mlp_classifier") throw std::invalid_argument("not an MLP classifier");
    Classifier c;
    c.config_ = mlp_config_from_json(j.at("config"));
    c.n_classes_ = j.at("n_classes").get<int>();
    c.degenerate_ = j.value("degenerate", false);
    c.standardizer_ = standardizer_from_json(j.at("standardizer"));
    for (const auto& l : j.at("layers")) {
        c.net_.layers().push_back({matrix_from_json(l.at("weights")), row_from_json(l.at("bias"))});
    }
    return c;
}

Classifier train_classifier(const MlpConfig& config, const Matrix& inputs, std::span<const int> labels,
                            int n_classes) {
    config.validate();
    if (inputs.rows() == 0) throw std::invalid_argument("training set is empty");
    if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
        throw std::invalid_argument("need exactly one label per training row");
    }
    require_finite(inputs, "training inputs");
    const int max_label = *std::max_element(labels.begin(), labels.end());
    if (n_classes < 0) n_classes = max_label + 1;
    for (int y : labels) {
        if (y < 0 || y >= n_classes) throw std::invalid_argument("label out of range");
    }

    Classifier clf;
    clf.config_ = config;
    clf.n_classes_ = n_classes;
    clf.standardizer_ = Standardizer::fit(inputs);
    clf.net_ = Mlp(static_cast<int>(inputs.cols()), config.layer_widths, n_classes, config.seed);

    const bool single_class = std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; });
    if (single_class) {
        clf.degenerate_ = true;
        auto& out = clf.net_.layers().back();
        out.weights.setZero();
        out.bias.setZero();
        out.bias(labels[0]) = 10.0;
        return clf;
    }

    const Matrix z = clf.standardizer_.transform(inputs);
    const auto n = static_cast<std::size_t>(z.rows());
    std::mt19937_64 shuffle_rng(config.seed ^ 0x5eedULL);
    SplitMix64 dropout{config.seed * 0x2545F4914F6CDD1DULL + 1};

    auto& layers = clf.net_.layers();
    std::vector<DenseLayer> m1(layers.size()), m2(layers.size()), grad;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        m1[l] = {Matrix::Zero(layers[l].weights.rows(), layers[l].weights.cols()), RowVector::Zero(layers[l].bias.size())};
        m2[l] = m1[l];
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double b1_pow = 1.0, b2_pow = 1.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(config.batch_size);
    Matrix xb;
    std::vector<int> yb;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            xb.resize(static_cast<Eigen::Index>(count), z.cols());
            yb.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(order[start + i]));
                yb[i] = labels[order[start + i]];
            }
            forward_backward(layers, xb, yb, config.l2_penalty, grad, &dropout, config.dropout_rate);

            b1_pow *= beta1;
            b2_pow *= beta2;
            const double step = config.learning_rate / (1.0 - b1_pow);
            const double v_corr = 1.0 / (1.0 - b2_pow);
            const double shrink = 1.0 - config.learning_rate * config.weight_decay;
            auto update = [&](auto& param, auto& g, auto& m, auto& v) {
                param *= shrink;
                m = beta1 * m + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
                param.array() -= step * m.array() / ((v.array() * v_corr).sqrt() + eps);
            };
            for (std::size_t l = 0; l < layers.size(); ++l) {
                update(layers[l].weights, grad[l].weights, m1[l].weights, m2[l].weights);
                update(layers[l].bias, grad[l].bias, m1[l].bias, m2[l].bias);
            }
        }
    }
    return clf;
}

// ----------------------------------------------------------------- regressors

const char* to_string(RegressorKind k) { return k == RegressorKind::knn ? "knn" : "boosted_trees"; }

RegressorKind parse_regressor_kind(const std::string& s) {
    if (s == "knn") return RegressorKind::knn;
    if (s == "boosted_trees") return RegressorKind::boosted_trees;
    throw std::invalid_argument("unknown regressor kind '" + s + "'");
}

json to_json(const RegressorParams& p) {
    return {{"kind", to_string(p.kind)},           {"k", p.k},
            {"n_trees", p.n_trees},                {"max_depth", p.max_depth},
            {"shrinkage", p.shrinkage},            {"min_samples_leaf", p.min_samples_leaf}};
}

RegressorParams regressor_params_from_json(const json& j, RegressorParams p) {
    if (j.contains("kind")) p.kind = parse_regressor_kind(j.at("kind").get<std::string>());
    p.k = j.value("k", p.k);
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.shrinkage = j.value("shrinkage", p.shrinkage);
    p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
    return p;
}

double RegressionTree::predict(std::span<const double> x) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(at)];
        at = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(at)].value;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, const std::vector<double>& residual, int max_depth, int min_leaf)
        : x_(x), r_(residual), max_depth_(max_depth), min_leaf_(static_cast<std::size_t>(std::max(1, min_leaf))) {}

    RegressionTree build() {
        std::vector<std::size_t> all(static_cast<std::size_t>(x_.rows()));
        std::iota(all.begin(), all.end(), 0);
        tree_.nodes.clear();
        grow(all, 0);
        return std::move(tree_);
    }

private:
    int grow(const std::vector<std::size_t>& idx, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double total = 0.0;
        for (auto i : idx) total += r_[i];
        const double n = static_cast<double>(idx.size());
        tree_.nodes[static_cast<std::size_t>(id)].value = total / n;
        if (depth >= max_depth_ || idx.size() < 2 * min_leaf_) return id;

        const double parent_score = total * total / n;
        double best_gain = 1e-12 * std::max(1.0, std::abs(parent_score));
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, double>> col(idx.size());
        for (Eigen::Index f = 0; f < x_.cols(); ++f) {
            for (std::size_t k = 0; k < idx.size(); ++k) col[k] = {x_(static_cast<Eigen::Index>(idx[k]), f), r_[idx[k]]};
            std::sort(col.begin(), col.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            double left = 0.0;
            for (std::size_t k = 0; k + 1 < col.size(); ++k) {
                left += col[k].second;
                const std::size_t nl = k + 1;
                const std::size_t nr = col.size() - nl;
                if (nl < min_leaf_ || nr < min_leaf_ || col[k].first == col[k + 1].first) continue;
                const double right = total - left;
                const double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) -
                                    parent_score;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (col[k].first + col[k + 1].first);
                }
            }
        }
        if (best_feature < 0) return id;

        std::vector<std::size_t> li, ri;
        for (auto i : idx) {
            (x_(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? li : ri).push_back(i);
        }
        const int left_id = grow(li, depth + 1);
        const int right_id = grow(ri, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left_id;
        node.right = right_id;
        return id;
    }

    const Matrix& x_;
    const std::vector<double>& r_;
    int max_depth_;
    std::size_t min_leaf_;
    RegressionTree tree_;
};

json tree_to_json(const RegressionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    return nodes;
}

RegressionTree tree_from_json(const json& j) {
    RegressionTree t;
    for (const auto& n : j) {
        t.nodes.push_back({n[0].get<int>(), n[1].get<double>(), n[2].get<int>(), n[3].get<int>(), n[4].get<double>()});
    }
    return t;
}

}  // namespace

double Regressor::predict(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_features_) {
        throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, expected " +
                                    std::to_string(n_features_));
    }
    if (const auto* b = std::get_if<Boosted>(&model_)) {
        double out = b->base;
        for (const auto& t : b->trees) out += params_.shrinkage * t.predict(x);
        return out;
    }
    const auto& knn = std::get<Knn>(model_);
    const RowVector q = knn.standardizer.transform_row(x);
    const auto n = static_cast<std::size_t>(knn.points.rows());
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = {(knn.points.row(static_cast<Eigen::Index>(i)) - q).squaredNorm(), i};
    }
    const auto k = static_cast<std::size_t>(params_.k);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += knn.targets[dist[i].second];
    return total / static_cast<double>(k);
}

std::vector<double> Regressor::predict(const Matrix& x) const {
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out[static_cast<std::size_t>(r)] = predict(std::span<const double>(x.row(r).data(), static_cast<std::size_t>(x.cols())));
    }
    return out;
}

json Regressor::to_json() const {
    json j{{"kind", "regressor"}, {"params", learn::to_json(params_)}, {"n_features", n_features_}};
    if (const auto* b = std::get_if<Boosted>(&model_)) {
        json trees = json::array();
        for (const auto& t : b->trees) trees.push_back(tree_to_json(t));
        j["base"] = b->base;
        j["trees"] = trees;
    } else {
        const auto& knn = std::get<Knn>(model_);
        j["standardizer"] = standardizer_to_json(knn.standardizer);
        j["points"] = matrix_to_json(knn.points);
        j["targets"] = knn.targets;
    }
    return j;
}

Regressor Regressor::from_json(const json& j) {
    if (j.value("kind", std::string()) != "regressor") throw std::invalid_argument("not a regressor document");
    Regressor r;
    r.params_ = regressor_params_from_json(j.at("params"));
    r.n_features_ = j.at("n_features").get<int>();
    if (r.params_.kind == RegressorKind::boosted_trees) {
        Boosted b;
        b.base = j.at("base").get<double>();
        for (const auto& t : j.at("trees")) b.trees.push_back(tree_from_json(t));
        r.model_ = std::move(b);
    } else {
        Knn k;
        k.standardizer = standardizer_from_json(j.at("standardizer"));
        k.points = matrix_from_json(j.at("points"));
        k.targets = j.at("targets").get<std::vector<double>>();
        r.model_ = std::move(k);
    }
    return r;
}

Regressor train_regressor(const RegressorParams& params, const Matrix& inputs, std::span<const double> targets) {
    if (inputs.rows() == 0) throw std::invalid_argument("training set is empty");
    if (static_cast<std::size_t>(inputs.rows()) != targets.size()) {
        throw std::invalid_argument("need exactly one target per training row");
    }
    require_finite(inputs, "training inputs");
    for (double t : targets) {
        if (!std::isfinite(t)) throw std::invalid_argument("targets must be finite");
    }

    Regressor reg;
    reg.params_ = params;
    reg.n_features_ = static_cast<int>(inputs.cols());
    if (params.kind == RegressorKind::knn) {
        if (params.k <= 0 || params.k > inputs.rows()) throw std::invalid_argument("k must be in [1, sample count]");
        Regressor::Knn knn;
        knn.standardizer = Standardizer::fit(inputs);
        knn.points = knn.standardizer.transform(inputs);
        knn.targets.assign(targets.begin(), targets.end());
        reg.model_ = std::move(knn);
        return reg;
    }

    if (params.n_trees <= 0) throw std::invalid_argument("boosting needs at least one tree");
    if (params.max_depth <= 0 || !(params.shrinkage > 0.0)) {
        throw std::invalid_argument("tree depth and shrinkage must be positive");
    }
    Regressor::Boosted model;
    model.base = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    std::vector<double> fitted(targets.size(), model.base);
    std::vector<double> residual(targets.size());
    for (int t = 0; t < params.n_trees; ++t) {
        for (std::size_t i = 0; i < targets.size(); ++i) residual[i] = targets[i] - fitted[i];
        auto tree = TreeBuilder(inputs, residual, params.max_depth, params.min_samples_leaf).build();
        for (std::size_t i = 0; i < targets.size(); ++i) {
            fitted[i] += params.shrinkage *
                         tree.predict(std::span<const double>(inputs.row(static_cast<Eigen::Index>(i)).data(),
                                                              static_cast<std::size_t>(inputs.cols())));
        }
        model.trees.push_back(std::move(tree));
    }
    reg.model_ = std::move(model);
    return reg;
}

RegressionMetrics metrics(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size() || targets.empty()) {
        throw std::invalid_argument("metrics need equal, non-zero lengths");
    }
    const double n = static_cast<double>(targets.size());
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
    double ss_res = 0.0, ss_tot = 0.0, abs_err = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double e = predictions[i] - targets[i];
        ss_res += e * e;
        abs_err += std::abs(e);
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    RegressionMetrics m;
    m.mae = abs_err / n;
    if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
    return m;
}

}  // namespace slb::learn
