#include "qris/model.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "qris/error.hpp"
#include "qris/file_io.hpp"

namespace qris {

using Row = std::array<double, kNumFeatures>;

std::string_view kind_name(ModelKind kind) noexcept { return kind == ModelKind::Gbdt ? "gbdt" : "rf"; }

std::optional<ModelKind> parse_kind(std::string_view text) noexcept {
    if (text == "gbdt" || text == "xgboost") return ModelKind::Gbdt;
    if (text == "rf" || text == "random-forest" || text == "random_forest") return ModelKind::RandomForest;
    return std::nullopt;
}

namespace {

const char* max_features_name(MaxFeatures m) {
    switch (m) {
        case MaxFeatures::Sqrt: return "sqrt";
        case MaxFeatures::Log2: return "log2";
        case MaxFeatures::All: return "all";
    }
    return "?";
}

const char* criterion_name(Criterion c) {
    switch (c) {
        case Criterion::Gini: return "gini";
        case Criterion::Entropy: return "entropy";
        case Criterion::LogLoss: return "log_loss";
    }
    return "?";
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::string HyperParams::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = std::string(kind_name(kind));
    if (kind == ModelKind::Gbdt) {
        j["n_estimators"] = gbdt.n_estimators;
        j["max_depth"] = gbdt.max_depth;
        j["learning_rate"] = gbdt.learning_rate;
        j["subsample"] = gbdt.subsample;
        j["colsample_bytree"] = gbdt.colsample_bytree;
        j["gamma"] = gbdt.gamma;
        j["min_child_weight"] = gbdt.min_child_weight;
        j["eval_metric"] = "logloss";
    } else {
        j["n_estimators"] = rf.n_estimators;
        j["max_depth"] = rf.max_depth;
        j["min_samples_split"] = rf.min_samples_split;
        j["min_samples_leaf"] = rf.min_samples_leaf;
        j["max_features"] = max_features_name(rf.max_features);
        j["bootstrap"] = rf.bootstrap;
        j["criterion"] = criterion_name(rf.criterion);
    }
    return j.dump();
}

HyperParams parse_hyperparams(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("hyperparameters are not valid JSON: ") + e.what());
    }
    // tune output nests the winning set under "best"
    if (j.is_object() && j.contains("best")) j = j["best"];
    require(j.is_object() && j.contains("kind") && j["kind"].is_string(), "hyperparameters need a \"kind\" field");
    const auto kind = parse_kind(j["kind"].get<std::string>());
    require(kind.has_value(), "unknown model kind in hyperparameters");
    HyperParams p;
    p.kind = *kind;
    try {
        auto get = [&j](const char* key, auto& field) {
            if (j.contains(key)) field = j[key].get<std::remove_reference_t<decltype(field)>>();
        };
        if (p.kind == ModelKind::Gbdt) {
            get("n_estimators", p.gbdt.n_estimators);
            get("max_depth", p.gbdt.max_depth);
            get("learning_rate", p.gbdt.learning_rate);
            get("subsample", p.gbdt.subsample);
            get("colsample_bytree", p.gbdt.colsample_bytree);
            get("gamma", p.gbdt.gamma);
            get("min_child_weight", p.gbdt.min_child_weight);
        } else {
            get("n_estimators", p.rf.n_estimators);
            get("max_depth", p.rf.max_depth);
            get("min_samples_split", p.rf.min_samples_split);
            get("min_samples_leaf", p.rf.min_samples_leaf);
            get("bootstrap", p.rf.bootstrap);
            if (j.contains("max_features")) {
                const auto m = j["max_features"].get<std::string>();
                if (m == "sqrt") p.rf.max_features = MaxFeatures::Sqrt;
                else if (m == "log2") p.rf.max_features = MaxFeatures::Log2;
                else if (m == "all" || m == "none") p.rf.max_features = MaxFeatures::All;
                else require(false, "max_features must be sqrt, log2 or all");
            }
            if (j.contains("criterion")) {
                const auto c = j["criterion"].get<std::string>();
                if (c == "gini") p.rf.criterion = Criterion::Gini;
                else if (c == "entropy") p.rf.criterion = Criterion::Entropy;
                else if (c == "log_loss") p.rf.criterion = Criterion::LogLoss;
                else require(false, "criterion must be gini, entropy or log_loss");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("bad hyperparameter value: ") + e.what());
    }
    return p;
}

void validate(const HyperParams& p) {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    if (p.kind == ModelKind::Gbdt) {
        const auto& g = p.gbdt;
        require(in(g.n_estimators, 50, 300), "n_estimators must lie in [50, 300]");
        require(in(g.max_depth, 3, 15), "max_depth must lie in [3, 15]");
        require(in(g.learning_rate, 0.01, 0.3), "learning_rate must lie in [0.01, 0.3]");
        require(in(g.subsample, 0.5, 1.0), "subsample must lie in [0.5, 1.0]");
        require(in(g.colsample_bytree, 0.5, 1.0), "colsample_bytree must lie in [0.5, 1.0]");
        require(in(g.gamma, 0.0, 5.0), "gamma must lie in [0, 5]");
        require(in(g.min_child_weight, 1.0, 10.0), "min_child_weight must lie in [1, 10]");
    } else {
        const auto& r = p.rf;
        require(in(r.n_estimators, 100, 1000), "n_estimators must lie in [100, 1000]");
        require(in(r.max_depth, 5, 50), "max_depth must lie in [5, 50]");
        require(in(r.min_samples_split, 2, 20), "min_samples_split must lie in [2, 20]");
        require(in(r.min_samples_leaf, 1, 20), "min_samples_leaf must lie in [1, 20]");
    }
}

double Tree::evaluate(const Row& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, d[i]);
        if (nodes[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return deepest;
}

std::uint64_t schema_digest() {
    std::string joined;
    for (const auto& name : feature_names()) {
        joined += name;
        joined += ',';
    }
    return fnv1a(joined);
}

double TreeEnsemble::probability(const Row& x) const {
    if (kind == ModelKind::Gbdt) {
        double margin = base_score;
        for (const auto& t : trees) margin += t.evaluate(x);
        return sigmoid(margin);
    }
    if (trees.empty()) return 0.5;
    double sum = 0.0;
    for (const auto& t : trees) sum += t.evaluate(x);
    return sum / static_cast<double>(trees.size());
}

Prediction TreeEnsemble::predict(const Row& x) const {
    const double p = probability(x);
    return Prediction{p >= 0.5 ? 1 : 0, p, std::max(p, 1.0 - p)};
}

Prediction predict(const TreeEnsemble& model, const FeatureVector& features) {
    if (model.schema != schema_digest()) {
        throw Error(ErrorCode::SchemaMismatch, "model was trained on a different feature schema");
    }
    return model.predict(features.values());
}

// ---------------------------------------------------------------------------
// Serialization. All integers and IEEE-754 doubles are little-endian.

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put(bits, 8);
    }
    void raw(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }
    std::uint64_t u64() { return get(8); }
    double f64() {
        const std::uint64_t bits = get(8);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw Error(ErrorCode::ModelFormat, "model file is truncated");
    }
    std::uint64_t get(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string TreeEnsemble::serialize() const {
    Writer w;
    w.raw("QRIS");
    w.u16(kModelFormatVersion);
    w.u8(static_cast<std::uint8_t>(kind));
    w.u8(0);
    w.u64(schema);
    w.u64(seed);
    if (kind == ModelKind::Gbdt) {
        const auto& g = params.gbdt;
        w.i32(g.n_estimators);
        w.i32(g.max_depth);
        w.f64(g.learning_rate);
        w.f64(g.subsample);
        w.f64(g.colsample_bytree);
        w.f64(g.gamma);
        w.f64(g.min_child_weight);
    } else {
        const auto& r = params.rf;
        w.i32(r.n_estimators);
        w.i32(r.max_depth);
        w.i32(r.min_samples_split);
        w.i32(r.min_samples_leaf);
        w.u8(static_cast<std::uint8_t>(r.max_features));
        w.u8(r.bootstrap ? 1 : 0);
        w.u8(static_cast<std::uint8_t>(r.criterion));
        w.u8(0);
    }
    w.f64(base_score);
    w.u32(static_cast<std::uint32_t>(trees.size()));
    for (const auto& t : trees) {
        w.u32(static_cast<std::uint32_t>(t.nodes.size()));
        for (const auto& n : t.nodes) {
            w.i32(n.feature);
            w.f64(n.threshold);
            w.i32(n.left);
            w.i32(n.right);
            w.f64(n.value);
        }
    }
    return w.take();
}

TreeEnsemble TreeEnsemble::deserialize(std::string_view bytes) {
    Reader r(bytes);
    if (r.raw(4) != "QRIS") throw Error(ErrorCode::ModelFormat, "not a model file (bad magic)");
    const auto version = r.u16();
    if (version != kModelFormatVersion) {
        throw Error(ErrorCode::ModelFormat, "unsupported model format version " + std::to_string(version));
    }
    TreeEnsemble m;
    const auto kind = r.u8();
    if (kind > 1) throw Error(ErrorCode::ModelFormat, "unknown model kind " + std::to_string(kind));
    m.kind = static_cast<ModelKind>(kind);
    m.params.kind = m.kind;
    r.u8();
    m.schema = r.u64();
    m.seed = r.u64();
    if (m.kind == ModelKind::Gbdt) {
        auto& g = m.params.gbdt;
        g.n_estimators = r.i32();
        g.max_depth = r.i32();
        g.learning_rate = r.f64();
        g.subsample = r.f64();
        g.colsample_bytree = r.f64();
        g.gamma = r.f64();
        g.min_child_weight = r.f64();
    } else {
        auto& p = m.params.rf;
        p.n_estimators = r.i32();
        p.max_depth = r.i32();
        p.min_samples_split = r.i32();
        p.min_samples_leaf = r.i32();
        const auto mf = r.u8();
        const auto bs = r.u8();
        const auto cr = r.u8();
        r.u8();
        if (mf > 2 || bs > 1 || cr > 2) throw Error(ErrorCode::ModelFormat, "invalid forest parameters");
        p.max_features = static_cast<MaxFeatures>(mf);
        p.bootstrap = bs == 1;
        p.criterion = static_cast<Criterion>(cr);
    }
    m.base_score = r.f64();
    const auto n_trees = r.u32();
    for (std::uint32_t t = 0; t < n_trees; ++t) {
        Tree tree;
        const auto n_nodes = r.u32();
        if (n_nodes == 0) throw Error(ErrorCode::ModelFormat, "empty tree");
        for (std::uint32_t i = 0; i < n_nodes; ++i) {
            TreeNode n;
            n.feature = r.i32();
            n.threshold = r.f64();
            n.left = r.i32();
            n.right = r.i32();
            n.value = r.f64();
            const auto idx = static_cast<std::int64_t>(i);
            if (n.feature >= kNumFeatures || n.feature < -1 ||
                (n.feature >= 0 && (n.left <= idx || n.right <= idx || n.left >= static_cast<std::int64_t>(n_nodes) ||
                                    n.right >= static_cast<std::int64_t>(n_nodes)))) {
                throw Error(ErrorCode::ModelFormat, "corrupt tree node");
            }
            tree.nodes.push_back(n);
        }
        m.trees.push_back(std::move(tree));
    }
    if (!r.done()) throw Error(ErrorCode::ModelFormat, "trailing bytes after model");
    return m;
}

void TreeEnsemble::save(const std::filesystem::path& path) const {
    write_file_atomic(path, serialize());
}

TreeEnsemble TreeEnsemble::load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

std::string TreeEnsemble::id() const { return fnv1a_hex(serialize()); }

// ---------------------------------------------------------------------------
// Exact greedy tree growth over presorted feature columns.

namespace {

struct Presorted {
    std::array<std::vector<std::uint32_t>, kNumFeatures> order;

    explicit Presorted(const FeatureTable& data) {
        for (int f = 0; f < kNumFeatures; ++f) {
            auto& o = order[static_cast<std::size_t>(f)];
            o.resize(data.size());
            std::iota(o.begin(), o.end(), 0u);
            std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
                return data.rows[a][static_cast<std::size_t>(f)] < data.rows[b][static_cast<std::size_t>(f)];
            });
        }
    }
};

double split_threshold(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return lo < mid ? mid : hi;
}

template <typename Policy>
class TreeBuilder {
public:
    using Stats = typename Policy::Stats;

    TreeBuilder(const FeatureTable& data, const Presorted& pre, const std::vector<std::uint8_t>& included,
                Policy& policy, Rng& rng)
        : data_(data), policy_(policy), rng_(rng), goes_left_(data.size(), 0) {
        for (int f = 0; f < kNumFeatures; ++f) {
            auto& o = order_[static_cast<std::size_t>(f)];
            for (auto r : pre.order[static_cast<std::size_t>(f)]) {
                if (included[r]) o.push_back(r);
            }
        }
    }

    Tree build() {
        tree_.nodes.clear();
        if (order_[0].empty()) {
            tree_.nodes.push_back(TreeNode{});
        } else {
            grow(0, order_[0].size(), 0);
        }
        return std::move(tree_);
    }

private:
    double x(std::uint32_t r, int f) const { return data_.rows[r][static_cast<std::size_t>(f)]; }

    int grow(std::size_t begin, std::size_t end, int depth) {
        Stats total{};
        for (std::size_t i = begin; i < end; ++i) policy_.add(total, order_[0][i]);
        const auto n = static_cast<long>(end - begin);
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, policy_.leaf_value(total)});
        if (!policy_.can_split(total, n, depth)) return index;

        int best_feature = -1;
        double best_gain = 0.0;
        double best_threshold = 0.0;
        long best_left = 0;
        for (int f : policy_.features(rng_)) {
            const auto& o = order_[static_cast<std::size_t>(f)];
            Stats left{};
            for (std::size_t i = begin; i + 1 < end; ++i) {
                policy_.add(left, o[i]);
                const double v = x(o[i], f);
                const double next = x(o[i + 1], f);
                if (!(v < next)) continue;
                const long n_left = static_cast<long>(i + 1 - begin);
                const auto gain = policy_.gain(total, left, Policy::subtract(total, left), n_left, n - n_left);
                if (gain && *gain > best_gain) {
                    best_gain = *gain;
                    best_feature = f;
                    best_threshold = split_threshold(v, next);
                    best_left = n_left;
                }
            }
        }
        if (best_feature < 0) return index;

        const auto& chosen = order_[static_cast<std::size_t>(best_feature)];
        for (std::size_t i = begin; i < end; ++i) goes_left_[chosen[i]] = static_cast<long>(i - begin) < best_left;
        for (auto& o : order_) {
            scratch_.clear();
            std::size_t w = begin;
            for (std::size_t i = begin; i < end; ++i) {
                if (goes_left_[o[i]]) {
                    o[w++] = o[i];
                } else {
                    scratch_.push_back(o[i]);
                }
            }
            std::copy(scratch_.begin(), scratch_.end(), o.begin() + static_cast<std::ptrdiff_t>(w));
        }

        const std::size_t mid = begin + static_cast<std::size_t>(best_left);
        const int left = grow(begin, mid, depth + 1);
        const int right = grow(mid, end, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(index)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left;
        node.right = right;
        return index;
    }

    const FeatureTable& data_;
    Policy& policy_;
    Rng& rng_;
    std::array<std::vector<std::uint32_t>, kNumFeatures> order_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::uint32_t> scratch_;
    Tree tree_;
};

// Second-order boosting split: gain = GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ).
struct GradientPolicy {
    struct Stats {
        double g = 0.0;
        double h = 0.0;
    };
    static constexpr double kLambda = 1.0;

    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const GbdtParams& params;
    std::vector<int> columns;

    void add(Stats& s, std::uint32_t r) const {
        s.g += grad[r];
        s.h += hess[r];
    }
    static Stats subtract(const Stats& a, const Stats& b) { return {a.g - b.g, a.h - b.h}; }
    double leaf_value(const Stats& s) const { return -s.g / (s.h + kLambda) * params.learning_rate; }
    bool can_split(const Stats&, long n, int depth) const { return depth < params.max_depth && n >= 2; }
    const std::vector<int>& features(Rng&) const { return columns; }
    std::optional<double> gain(const Stats& all, const Stats& l, const Stats& r, long, long) const {
        if (l.h < params.min_child_weight || r.h < params.min_child_weight) return std::nullopt;
        const double g = l.g * l.g / (l.h + kLambda) + r.g * r.g / (r.h + kLambda) - all.g * all.g / (all.h + kLambda);
        if (!(g > 1e-12) || g < params.gamma) return std::nullopt;
        return g;
    }
};

// Weighted impurity decrease with per-split feature subsets.
struct ImpurityPolicy {
    struct Stats {
        double w0 = 0.0;
        double w1 = 0.0;
    };

    const std::vector<int>& labels;
    const std::vector<double>& weights;
    const RfParams& params;
    int mtry = kNumFeatures;
    std::vector<int> drawn;

    void add(Stats& s, std::uint32_t r) const { (labels[r] ? s.w1 : s.w0) += weights[r]; }
    static Stats subtract(const Stats& a, const Stats& b) { return {a.w0 - b.w0, a.w1 - b.w1}; }
    double leaf_value(const Stats& s) const { return s.w1 / (s.w0 + s.w1); }
    bool can_split(const Stats& s, long n, int depth) const {
        return depth < params.max_depth && n >= params.min_samples_split && s.w0 > 0.0 && s.w1 > 0.0;
    }
    const std::vector<int>& features(Rng& rng) {
        std::vector<int> all(kNumFeatures);
        std::iota(all.begin(), all.end(), 0);
        for (int i = 0; i < mtry; ++i) {
            const auto j = static_cast<std::size_t>(i) + rng.index(static_cast<std::uint64_t>(kNumFeatures - i));
            std::swap(all[static_cast<std::size_t>(i)], all[j]);
        }
        drawn.assign(all.begin(), all.begin() + mtry);
        return drawn;
    }
    double impurity(const Stats& s) const {
        const double w = s.w0 + s.w1;
        if (w <= 0.0) return 0.0;
        const double p0 = s.w0 / w;
        const double p1 = s.w1 / w;
        if (params.criterion == Criterion::Gini) return 1.0 - p0 * p0 - p1 * p1;
        double e = 0.0;
        if (p0 > 0.0) e -= p0 * std::log2(p0);
        if (p1 > 0.0) e -= p1 * std::log2(p1);
        return e;
    }
    std::optional<double> gain(const Stats& all, const Stats& l, const Stats& r, long n_left, long n_right) const {
        if (n_left < params.min_samples_leaf || n_right < params.min_samples_leaf) return std::nullopt;
        const double w = all.w0 + all.w1;
        const double g = w * impurity(all) - (l.w0 + l.w1) * impurity(l) - (r.w0 + r.w1) * impurity(r);
        if (!(g > 1e-12 * w)) return std::nullopt;
        return g;
    }
};

int mtry_for(MaxFeatures m) {
    switch (m) {
        case MaxFeatures::Sqrt: return std::max(1, static_cast<int>(std::sqrt(static_cast<double>(kNumFeatures))));
        case MaxFeatures::Log2: return std::max(1, static_cast<int>(std::log2(static_cast<double>(kNumFeatures))));
        case MaxFeatures::All: return kNumFeatures;
    }
    return kNumFeatures;
}

void check_training_data(const FeatureTable& data) {
    if (data.size() < 2) throw Error(ErrorCode::TooFewRows, "training needs at least two rows");
    const auto pos = data.count(1);
    if (pos == 0 || pos == data.size()) {
        throw Error(ErrorCode::SingleClassData, "training data must contain both labels");
    }
}

TreeEnsemble train_gbdt(const FeatureTable& data, const GbdtParams& p, std::uint64_t seed) {
    require(p.n_estimators >= 1 && p.max_depth >= 1 && p.learning_rate > 0.0 && p.subsample > 0.0 &&
                p.subsample <= 1.0 && p.colsample_bytree > 0.0 && p.colsample_bytree <= 1.0 && p.gamma >= 0.0 &&
                p.min_child_weight >= 0.0,
            "invalid boosting parameters");
    const std::size_t n = data.size();
    const double prevalence = static_cast<double>(data.count(1)) / static_cast<double>(n);

    TreeEnsemble model;
    model.kind = ModelKind::Gbdt;
    model.params.kind = ModelKind::Gbdt;
    model.params.gbdt = p;
    model.seed = seed;
    model.base_score = std::log(prevalence / (1.0 - prevalence));

    const Presorted pre(data);
    std::vector<double> margin(n, model.base_score);
    std::vector<double> grad(n);
    std::vector<double> hess(n);
    std::vector<std::uint8_t> included(n, 1);
    Rng rng(seed);
    const int n_columns = std::clamp(static_cast<int>(std::lround(p.colsample_bytree * kNumFeatures)), 1, kNumFeatures);

    for (int t = 0; t < p.n_estimators; ++t) {
        for (std::size_t r = 0; r < n; ++r) {
            const double prob = sigmoid(margin[r]);
            grad[r] = prob - data.labels[r];
            hess[r] = std::max(prob * (1.0 - prob), 1e-16);
        }
        if (p.subsample < 1.0) {
            for (auto& inc : included) inc = rng.unit() < p.subsample;
        }
        std::vector<int> columns(kNumFeatures);
        std::iota(columns.begin(), columns.end(), 0);
        if (n_columns < kNumFeatures) {
            rng.shuffle(columns);
            columns.resize(static_cast<std::size_t>(n_columns));
            std::sort(columns.begin(), columns.end());
        }
        GradientPolicy policy{grad, hess, p, columns};
        TreeBuilder<GradientPolicy> builder(data, pre, included, policy, rng);
        Tree tree = builder.build();
        for (std::size_t r = 0; r < n; ++r) margin[r] += tree.evaluate(data.rows[r]);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

TreeEnsemble train_forest(const FeatureTable& data, const RfParams& p, std::uint64_t seed, int jobs) {
    require(p.n_estimators >= 1 && p.max_depth >= 1 && p.min_samples_split >= 2 && p.min_samples_leaf >= 1,
            "invalid forest parameters");
    const std::size_t n = data.size();
    TreeEnsemble model;
    model.kind = ModelKind::RandomForest;
    model.params.kind = ModelKind::RandomForest;
    model.params.rf = p;
    model.seed = seed;
    model.trees.resize(static_cast<std::size_t>(p.n_estimators));

    const Presorted pre(data);
    // Each tree draws from its own stream so the forest does not depend on
    // how trees are spread over threads.
    auto grow_tree = [&](int t) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
        std::vector<double> weights(n, 1.0);
        std::vector<std::uint8_t> included(n, 1);
        if (p.bootstrap) {
            std::fill(weights.begin(), weights.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) weights[rng.index(n)] += 1.0;
            for (std::size_t i = 0; i < n; ++i) included[i] = weights[i] > 0.0;
        }
        ImpurityPolicy policy{data.labels, weights, p, mtry_for(p.max_features), {}};
        TreeBuilder<ImpurityPolicy> builder(data, pre, included, policy, rng);
        model.trees[static_cast<std::size_t>(t)] = builder.build();
    };
    const int workers = std::clamp(jobs, 1, p.n_estimators);
    if (workers == 1) {
        for (int t = 0; t < p.n_estimators; ++t) grow_tree(t);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&] {
                for (int t = next++; t < p.n_estimators; t = next++) grow_tree(t);
            });
        }
        for (auto& th : threads) th.join();
    }
    return model;
}

}  // namespace

TreeEnsemble train(const FeatureTable& data, const HyperParams& params, std::uint64_t seed,
                   const TrainOptions& options) {
    check_training_data(data);
    if (params.kind == ModelKind::Gbdt) return train_gbdt(data, params.gbdt, seed);
    return train_forest(data, params.rf, seed, options.jobs);
}

// ---------------------------------------------------------------------------
// Metrics.

std::string EvalReport::to_json(bool include_roc) const {
    nlohmann::ordered_json j;
    j["tp"] = tp;
    j["fp"] = fp;
    j["tn"] = tn;
    j["fn"] = fn;
    j["accuracy"] = accuracy;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["auc"] = auc;
    if (include_roc) {
        j["roc"] = nlohmann::ordered_json::array();
        for (const auto& pt : roc) j["roc"].push_back({pt.fpr, pt.tpr});
    }
    return j.dump();
}

EvalReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
    EvalReport rep;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= 0.5;
        if (labels[i] == 1) {
            ++(predicted ? rep.tp : rep.fn);
        } else {
            ++(predicted ? rep.fp : rep.tn);
        }
    }
    const long pos = rep.tp + rep.fn;
    const long neg = rep.tn + rep.fp;
    if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClassData, "AUC needs both labels in the evaluation set");

    const double total = static_cast<double>(pos + neg);
    rep.accuracy = 100.0 * static_cast<double>(rep.tp + rep.tn) / total;
    rep.precision = rep.tp + rep.fp > 0 ? 100.0 * static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp) : 0.0;
    rep.recall = 100.0 * static_cast<double>(rep.tp) / static_cast<double>(pos);
    rep.f1 = rep.precision + rep.recall > 0.0 ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall) : 0.0;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    rep.roc.push_back({0.0, 0.0});
    long tp = 0;
    long fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] == 1 ? tp : fp) += 1;
        if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
        rep.roc.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
    }
    for (std::size_t i = 1; i < rep.roc.size(); ++i) {
        rep.auc += (rep.roc[i].fpr - rep.roc[i - 1].fpr) * (rep.roc[i].tpr + rep.roc[i - 1].tpr) / 2.0;
    }
    return rep;
}

EvalReport evaluate(const TreeEnsemble& model, const FeatureTable& data) {
    std::vector<double> scores;
    scores.reserve(data.size());
    for (const auto& row : data.rows) scores.push_back(model.probability(row));
    return evaluate_scores(scores, data.labels);
}

// ---------------------------------------------------------------------------
// Cross-validation and search.

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
    if (folds < 2) throw Error(ErrorCode::InvalidArgument, "need at least two folds");
    std::vector<int> fold(labels.size(), 0);
    for (int l = 0; l < 2; ++l) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == l) idx.push_back(i);
        }
        if (static_cast<int>(idx.size()) < folds) {
            throw Error(ErrorCode::TooFewRows, "label " + std::to_string(l) + " has " + std::to_string(idx.size()) +
                                                   " rows; " + std::to_string(folds) + " folds need at least that many");
        }
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(l)));
        rng.shuffle(idx);
        for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    }
    return fold;
}

double cross_val_accuracy(const FeatureTable& data, const HyperParams& params, int folds, std::uint64_t seed,
                          const TrainOptions& options) {
    const auto fold = stratified_folds(data.labels, folds, seed);
    double sum = 0.0;
    for (int k = 0; k < folds; ++k) {
        FeatureTable train_part;
        FeatureTable hold_out;
        for (std::size_t i = 0; i < data.size(); ++i) {
            FeatureTable& dst = fold[i] == k ? hold_out : train_part;
            dst.rows.push_back(data.rows[i]);
            dst.labels.push_back(data.labels[i]);
        }
        const auto model = train(train_part, params, mix_seed(seed, 100 + static_cast<std::uint64_t>(k)), options);
        long correct = 0;
        for (std::size_t i = 0; i < hold_out.size(); ++i) correct += model.predict(hold_out.rows[i]).label == hold_out.labels[i];
        sum += static_cast<double>(correct) / static_cast<double>(hold_out.size());
    }
    return sum / folds;
}

HyperParams sample_params(ModelKind kind, Rng& rng) {
    HyperParams p;
    p.kind = kind;
    if (kind == ModelKind::Gbdt) {
        auto& g = p.gbdt;
        g.n_estimators = static_cast<int>(rng.integer(50, 300));
        g.max_depth = static_cast<int>(rng.integer(3, 15));
        g.learning_rate = rng.uniform(0.01, 0.3);
        g.subsample = rng.uniform(0.5, 1.0);
        g.colsample_bytree = rng.uniform(0.5, 1.0);
        g.gamma = rng.uniform(0.0, 5.0);
        g.min_child_weight = static_cast<double>(rng.integer(1, 10));
    } else {
        auto& r = p.rf;
        r.n_estimators = static_cast<int>(rng.integer(100, 1000));
        r.max_depth = static_cast<int>(rng.integer(5, 50));
        r.min_samples_split = static_cast<int>(rng.integer(2, 20));
        r.min_samples_leaf = static_cast<int>(rng.integer(1, 20));
        r.max_features = static_cast<MaxFeatures>(rng.index(3));
        r.bootstrap = rng.index(2) == 1;
        r.criterion = static_cast<Criterion>(rng.index(3));
    }
    return p;
}

TuneResult tune(ModelKind kind, const FeatureTable& data, std::uint64_t seed, const TuneOptions& options) {
    if (options.trials < 1) throw Error(ErrorCode::InvalidArgument, "need at least one trial");
    check_training_data(data);
    stratified_folds(data.labels, options.folds, seed);

    const auto start = std::chrono::steady_clock::now();
    Rng rng(seed);
    TuneResult result;
    for (int t = 0; t < options.trials; ++t) {
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (t > 0 && elapsed >= options.time_cap_seconds) break;
        TuneTrial trial{sample_params(kind, rng), 0.0};
        trial.cv_accuracy = cross_val_accuracy(data, trial.params, options.folds, mix_seed(seed, 1), {options.jobs});
        if (result.trials.empty() || trial.cv_accuracy > result.best_cv_accuracy) {
            result.best = trial.params;
            result.best_cv_accuracy = trial.cv_accuracy;
        }
        result.trials.push_back(trial);
    }
    return result;
}

}  // namespace qris
