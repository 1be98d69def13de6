#pragma once

// Small from-scratch learners: a feed-forward classifier for the task model,
// and k-NN / gradient-boosted-tree regressors for interaction-time models.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace slb::learn {

/// Samples are rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Throws std::invalid_argument if any entry is NaN or infinite.
void require_finite(const Matrix& x, const char* what);

/// Per-feature centering and scaling; constant features get scale 1.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer fit(const Matrix& x);
    Matrix transform(const Matrix& x) const;
    Matrix inverse(const Matrix& z) const;
    RowVector transform_row(std::span<const double> row) const;
};

struct MlpConfig {
    std::vector<int> layer_widths{32, 64, 32};
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;  // decoupled, applied directly to the parameters
    double l2_penalty = 0.0;     // coupled, added to the gradient before the adaptive step
    int epochs = 200;
    int batch_size = 64;
    double dropout_rate = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const MlpConfig& c);
MlpConfig mlp_config_from_json(const nlohmann::json& j, MlpConfig defaults = {});

struct DenseLayer {
    Matrix weights;  // inputs x outputs
    RowVector bias;
};

/// Fully connected ReLU network with a softmax output.
class Mlp {
public:
    Mlp() = default;
    Mlp(int n_inputs, const std::vector<int>& hidden, int n_outputs, std::uint64_t seed);

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    int n_inputs() const;
    int n_outputs() const;

    /// Row-wise class probabilities (no dropout).
    Matrix probabilities(const Matrix& x) const;

    /// Mean cross-entropy over the batch plus 0.5 * l2 * ||params||^2, with
    /// its gradient (no dropout).
    double loss_and_gradient(const Matrix& x, std::span<const int> labels, double l2,
                             std::vector<DenseLayer>& grad) const;

    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> p);

private:
    std::vector<DenseLayer> layers_;
};

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

class Classifier {
public:
    Classifier() = default;

    const MlpConfig& config() const { return config_; }
    int n_classes() const { return n_classes_; }
    int n_features() const { return static_cast<int>(standardizer_.mean.size()); }
    const Standardizer& standardizer() const { return standardizer_; }
    const Mlp& network() const { return net_; }
    /// Set when training saw a single class; the model then predicts it
    /// everywhere.
    bool degenerate() const { return degenerate_; }

    /// Throws std::invalid_argument on a dimension mismatch.
    Prediction predict(std::span<const double> input) const;
    std::vector<int> predict_labels(const Matrix& x) const;
    Matrix predict_probabilities(const Matrix& x) const;
    double accuracy(const Matrix& x, std::span<const int> labels) const;

    nlohmann::json to_json() const;
    static Classifier from_json(const nlohmann::json& j);

private:
    friend Classifier train_classifier(const MlpConfig&, const Matrix&, std::span<const int>, int);

    MlpConfig config_;
    int n_classes_ = 0;
    Standardizer standardizer_;
    Mlp net_;
    bool degenerate_ = false;
};

/// Mini-batch training with AdamW, ReLU and inverted dropout. Deterministic
/// for a given (config, data). `n_classes` < 0 infers max(label) + 1.
Classifier train_classifier(const MlpConfig& config, const Matrix& inputs, std::span<const int> labels,
                            int n_classes = -1);

enum class RegressorKind { knn, boosted_trees };

const char* to_string(RegressorKind k);
RegressorKind parse_regressor_kind(const std::string& s);

struct RegressorParams {
    RegressorKind kind = RegressorKind::boosted_trees;
    int k = 5;
    int n_trees = 200;
    int max_depth = 4;
    double shrinkage = 0.1;
    int min_samples_leaf = 1;
};

nlohmann::json to_json(const RegressorParams& p);
RegressorParams regressor_params_from_json(const nlohmann::json& j, RegressorParams defaults = {});

/// Binary regression tree stored as a flat node array; node 0 is the root.
struct RegressionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    double predict(std::span<const double> x) const;
};

class Regressor {
public:
    const RegressorParams& params() const { return params_; }
    int n_features() const { return n_features_; }

    double predict(std::span<const double> x) const;
    std::vector<double> predict(const Matrix& x) const;

    nlohmann::json to_json() const;
    static Regressor from_json(const nlohmann::json& j);

private:
    friend Regressor train_regressor(const RegressorParams&, const Matrix&, std::span<const double>);

    struct Knn {
        Standardizer standardizer;
        Matrix points;  // standardized
        std::vector<double> targets;
    };
    struct Boosted {
        double base = 0.0;
        std::vector<RegressionTree> trees;
    };

    RegressorParams params_;
    int n_features_ = 0;
    std::variant<Knn, Boosted> model_;
};

/// Throws std::invalid_argument for empty data, non-finite values, k larger
/// than the sample count, or zero trees.
Regressor train_regressor(const RegressorParams& params, const Matrix& inputs, std::span<const double> targets);

struct RegressionMetrics {
    std::optional<double> r2;  // empty when the targets have zero variance
    double mae = 0.0;
};

RegressionMetrics metrics(std::span<const double> predictions, std::span<const double> targets);

}  // namespace slb::learn
