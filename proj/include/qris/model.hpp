#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qris/dataset.hpp"
#include "qris/features.hpp"
#include "qris/rng.hpp"

namespace qris {

enum class ModelKind : std::uint8_t { Gbdt = 0, RandomForest = 1 };
enum class MaxFeatures : std::uint8_t { Sqrt = 0, Log2 = 1, All = 2 };
enum class Criterion : std::uint8_t { Gini = 0, Entropy = 1, LogLoss = 2 };

std::string_view kind_name(ModelKind kind) noexcept;
std::optional<ModelKind> parse_kind(std::string_view text) noexcept;

struct GbdtParams {
    int n_estimators = 100;
    int max_depth = 6;
    double learning_rate = 0.3;
    double subsample = 1.0;
    double colsample_bytree = 1.0;
    double gamma = 0.0;
    double min_child_weight = 1.0;
};

struct RfParams {
    int n_estimators = 100;
    int max_depth = 20;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    MaxFeatures max_features = MaxFeatures::Sqrt;
    bool bootstrap = true;
    Criterion criterion = Criterion::Gini;
};

struct HyperParams {
    ModelKind kind = ModelKind::Gbdt;
    GbdtParams gbdt;
    RfParams rf;

    std::string to_json() const;
};

/// Inverse of HyperParams::to_json; missing fields keep their defaults. Also
/// accepts a tune summary, reading its "best" member.
HyperParams parse_hyperparams(std::string_view json_text);

/// Throws InvalidArgument when a value lies outside its tuning range.
void validate(const HyperParams& params);

/// Node of a flattened binary tree. Rows with x[feature] < threshold go left.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double evaluate(const std::array<double, kNumFeatures>& x) const;
    int depth() const;
};

struct Prediction {
    int label = 0;            // 1 = phishing
    double probability = 0;   // of phishing
    double confidence = 0;    // max(p, 1 - p)
};

/// Digest of the feature column names; models refuse vectors from another schema.
std::uint64_t schema_digest();

class TreeEnsemble {
public:
    ModelKind kind = ModelKind::Gbdt;
    HyperParams params;
    std::uint64_t seed = 0;
    std::uint64_t schema = schema_digest();
    double base_score = 0.0;
    std::vector<Tree> trees;

    double probability(const std::array<double, kNumFeatures>& x) const;
    Prediction predict(const std::array<double, kNumFeatures>& x) const;

    std::string serialize() const;
    static TreeEnsemble deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static TreeEnsemble load(const std::filesystem::path& path);

    /// Digest of the serialized model.
    std::string id() const;
};

inline constexpr std::uint16_t kModelFormatVersion = 1;

struct TrainOptions {
    int jobs = 1;
};

TreeEnsemble train(const FeatureTable& data, const HyperParams& params, std::uint64_t seed,
                   const TrainOptions& options = {});

/// Checks the schema digest, then predicts.
Prediction predict(const TreeEnsemble& model, const FeatureVector& features);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct EvalReport {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;
    double accuracy = 0.0;  // percentages
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<RocPoint> roc;
    double auc = 0.0;

    std::string to_json(bool include_roc = false) const;
};

/// Metrics for phishing-probability scores against 0/1 labels.
EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels);
EvalReport evaluate(const TreeEnsemble& model, const FeatureTable& data);

/// Mean accuracy (fraction) over stratified folds.
double cross_val_accuracy(const FeatureTable& data, const HyperParams& params, int folds, std::uint64_t seed,
                          const TrainOptions& options = {});

/// Fold index per row: rows of each label are shuffled and dealt round-robin.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

struct TuneTrial {
    HyperParams params;
    double cv_accuracy = 0.0;
};

struct TuneResult {
    HyperParams best;
    double best_cv_accuracy = 0.0;
    std::vector<TuneTrial> trials;
};

/// Uniform draw from the tuning ranges.
HyperParams sample_params(ModelKind kind, Rng& rng);

struct TuneOptions {
    int trials = 100;
    double time_cap_seconds = 3600.0;
    int folds = 5;
    int jobs = 1;
};

/// Seeded random search maximising mean stratified CV accuracy; stops at the
/// trial count or the time cap, whichever comes first; ties keep the earlier trial.
TuneResult tune(ModelKind kind, const FeatureTable& data, std::uint64_t seed, const TuneOptions& options = {});

}  // namespace qris
