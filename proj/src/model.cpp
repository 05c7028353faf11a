#include "pbda/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pbda/errors.hpp"
#include "pbda/rng.hpp"

namespace pbda {

namespace {

constexpr int kMaxHiddenLayers = 3;
constexpr int kMaxWidth = 256;
constexpr int kMaxParams = 50000;

// Weight/bias slices of layer `l` inside the flat parameter vector.
struct LayerView {
    int w_offset, rows, cols, b_offset;
};

LayerView layer_view(const std::vector<int>& widths, int l) {
    int off = 0;
    for (int i = 0; i < l; ++i) off += widths[i + 1] * widths[i] + widths[i + 1];
    return LayerView{off, widths[l + 1], widths[l], off + widths[l + 1] * widths[l]};
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weight_map(
    const Eigen::VectorXd& params, const LayerView& v) {
    return {params.data() + v.w_offset, v.rows, v.cols};
}

Eigen::Map<const Eigen::VectorXd> bias_map(const Eigen::VectorXd& params, const LayerView& v) {
    return {params.data() + v.b_offset, v.rows};
}

}  // namespace

Architecture Architecture::linear(int input_dim, int class_count) {
    Architecture a{Kind::linear, input_dim, {}, class_count};
    a.validate();
    return a;
}

Architecture Architecture::mlp(int input_dim, std::vector<int> hidden_dims, int class_count) {
    Architecture a{Kind::mlp, input_dim, std::move(hidden_dims), class_count};
    a.validate();
    return a;
}

std::vector<int> Architecture::widths() const {
    std::vector<int> w;
    w.push_back(input_dim);
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(class_count);
    return w;
}

int Architecture::layer_count() const { return static_cast<int>(hidden_dims.size()) + 1; }

int Architecture::param_count() const {
    const auto w = widths();
    int total = 0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) total += w[i + 1] * w[i] + w[i + 1];
    return total;
}

void Architecture::validate() const {
    if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
    if (class_count < 2) throw std::invalid_argument("class_count must be >= 2");
    if (kind == Kind::linear && !hidden_dims.empty())
        throw std::invalid_argument("linear architecture cannot have hidden layers");
    if (kind == Kind::mlp && hidden_dims.empty())
        throw std::invalid_argument("mlp architecture needs at least one hidden layer");
    if (static_cast<int>(hidden_dims.size()) > kMaxHiddenLayers)
        throw std::invalid_argument("at most 3 hidden layers supported");
    for (int h : hidden_dims)
        if (h < 1 || h > kMaxWidth)
            throw std::invalid_argument("hidden widths must be in 1..256");
    if (param_count() > kMaxParams)
        throw std::invalid_argument("parameter count " + std::to_string(param_count()) +
                                    " exceeds the 50k cap");
}

int argmax_least(const Eigen::Ref<const Eigen::VectorXd>& scores) {
    int best = 0;
    for (int i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

Eigen::VectorXd ScoredModel::scores(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return scores_batch(x.transpose()).row(0);
}

Eigen::MatrixXd ScoredModel::scores_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    return forward_trace(arch, params, X).scores;
}

int ScoredModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return argmax_least(scores(x));
}

std::vector<int> ScoredModel::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    const auto S = scores_batch(X);
    std::vector<int> preds(static_cast<std::size_t>(S.rows()));
    for (Eigen::Index i = 0; i < S.rows(); ++i) preds[static_cast<std::size_t>(i)] = argmax_least(S.row(i));
    return preds;
}

Eigen::VectorXd init_params(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(derive_seed(seed, 0x1417ULL));
    Eigen::VectorXd params(arch.param_count());
    const auto widths = arch.widths();
    for (int l = 0; l < arch.layer_count(); ++l) {
        const auto v = layer_view(widths, l);
        const double bound = 1.0 / std::sqrt(static_cast<double>(v.cols));
        for (int i = 0; i < v.rows * v.cols; ++i) params[v.w_offset + i] = rng.uniform(-bound, bound);
        for (int i = 0; i < v.rows; ++i) params[v.b_offset + i] = rng.uniform(-bound, bound);
    }
    return params;
}

ScoredModel init_model(const Architecture& arch, std::uint64_t seed) {
    return ScoredModel{arch, init_params(arch, seed)};
}

bool disagree(const ScoredModel& a, const ScoredModel& b, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return a.predict(x) != b.predict(x);
}

ForwardTrace forward_trace(const Architecture& arch, const Eigen::VectorXd& params,
                           const Eigen::Ref<const Eigen::MatrixXd>& X) {
    if (X.cols() != arch.input_dim)
        throw std::invalid_argument("input dim " + std::to_string(X.cols()) + " != architecture dim " +
                                    std::to_string(arch.input_dim));
    if (!X.allFinite()) throw std::invalid_argument("non-finite input to scorer");
    if (params.size() != arch.param_count())
        throw std::invalid_argument("parameter vector length mismatch");

    const auto widths = arch.widths();
    ForwardTrace trace;
    trace.act.reserve(static_cast<std::size_t>(arch.layer_count()));
    trace.act.push_back(X);
    for (int l = 0; l < arch.layer_count(); ++l) {
        const auto v = layer_view(widths, l);
        Eigen::MatrixXd z = trace.act.back() * weight_map(params, v).transpose();
        z.rowwise() += bias_map(params, v).transpose();
        if (l + 1 < arch.layer_count())
            trace.act.push_back(z.array().tanh().matrix());
        else
            trace.scores = std::move(z);
    }
    return trace;
}

void backward_trace(const Architecture& arch, const Eigen::VectorXd& params, const ForwardTrace& trace,
                    const Eigen::Ref<const Eigen::MatrixXd>& dscores, Eigen::VectorXd& grad,
                    Eigen::MatrixXd* dX) {
    const auto widths = arch.widths();
    Eigen::MatrixXd dz = dscores;
    for (int l = arch.layer_count() - 1; l >= 0; --l) {
        const auto v = layer_view(widths, l);
        const auto& input = trace.act[static_cast<std::size_t>(l)];
        // dW = dz^T * input (row-major flat), db = column sums of dz
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dW =
            dz.transpose() * input;
        Eigen::Map<Eigen::VectorXd>(grad.data() + v.w_offset, v.rows * v.cols) +=
            Eigen::Map<Eigen::VectorXd>(dW.data(), v.rows * v.cols);
        grad.segment(v.b_offset, v.rows) += dz.colwise().sum().transpose();
        if (l == 0) {
            if (dX) *dX = dz * weight_map(params, v);
            return;
        }
        Eigen::MatrixXd dact = dz * weight_map(params, v);
        // tanh' = 1 - act^2
        dz = (dact.array() * (1.0 - input.array().square())).matrix();
    }
}

void backward_from_representation(const Architecture& arch, const Eigen::VectorXd& params,
                                  const ForwardTrace& trace,
                                  const Eigen::Ref<const Eigen::MatrixXd>& drep,
                                  Eigen::VectorXd& grad) {
    if (arch.kind == Architecture::Kind::linear) return;  // identity representation
    const auto widths = arch.widths();
    const int last_hidden = arch.layer_count() - 1;  // index of final hidden activation
    Eigen::MatrixXd dz = (drep.array() *
                          (1.0 - trace.act[static_cast<std::size_t>(last_hidden)].array().square()))
                             .matrix();
    for (int l = last_hidden - 1; l >= 0; --l) {
        const auto v = layer_view(widths, l);
        const auto& input = trace.act[static_cast<std::size_t>(l)];
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dW =
            dz.transpose() * input;
        Eigen::Map<Eigen::VectorXd>(grad.data() + v.w_offset, v.rows * v.cols) +=
            Eigen::Map<Eigen::VectorXd>(dW.data(), v.rows * v.cols);
        grad.segment(v.b_offset, v.rows) += dz.colwise().sum().transpose();
        if (l == 0) return;
        Eigen::MatrixXd dact = dz * weight_map(params, v);
        dz = (dact.array() * (1.0 - input.array().square())).matrix();
    }
}

int head_param_offset(const Architecture& arch) {
    const auto widths = arch.widths();
    const int rep_dim = widths[widths.size() - 2];
    return arch.param_count() - (arch.class_count * rep_dim + arch.class_count);
}

HeadSplit split_head(const ScoredModel& model) {
    const auto widths = model.arch.widths();
    const int rep_dim = widths[widths.size() - 2];
    const int offset = head_param_offset(model.arch);
    ScoredModel head{Architecture::linear(rep_dim, model.arch.class_count),
                     model.params.segment(offset, model.params.size() - offset)};
    return HeadSplit{model.arch, model.params, std::move(head)};
}

Eigen::MatrixXd HeadSplit::feature_map_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    if (full_arch.kind == Architecture::Kind::linear) return X;
    const auto trace = forward_trace(full_arch, full_params, X);
    return trace.act.back();
}

Eigen::VectorXd HeadSplit::feature_map(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return feature_map_batch(x.transpose()).row(0);
}

ScoredModel with_head_params(const ScoredModel& model, const Eigen::VectorXd& head_params) {
    const int offset = head_param_offset(model.arch);
    if (head_params.size() != model.params.size() - offset)
        throw std::invalid_argument("head parameter length mismatch");
    ScoredModel out = model;
    out.params.segment(offset, head_params.size()) = head_params;
    return out;
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr const char* kModelFormat = "pbda-model";
constexpr int kModelVersion = 1;

// Doubles are stored as IEEE-754 bit patterns (hex) so round-trips are
// bit-exact regardless of the JSON number printer.
std::string double_to_hex(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

double hex_to_double(const std::string& s) {
    if (s.size() != 16) throw ParseError("bad parameter encoding '" + s + "'");
    std::uint64_t bits = 0;
    for (char ch : s) {
        int digit;
        if (ch >= '0' && ch <= '9') digit = ch - '0';
        else if (ch >= 'a' && ch <= 'f') digit = ch - 'a' + 10;
        else throw ParseError("bad parameter encoding '" + s + "'");
        bits = (bits << 4) | static_cast<std::uint64_t>(digit);
    }
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

nlohmann::json arch_to_json(const Architecture& arch) {
    return {{"kind", arch.kind == Architecture::Kind::linear ? "linear" : "mlp"},
            {"input_dim", arch.input_dim},
            {"hidden_dims", arch.hidden_dims},
            {"class_count", arch.class_count},
            {"activation", "tanh"}};
}

Architecture arch_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (j.contains("activation") && j.at("activation").get<std::string>() != "tanh")
        throw ParseError("unsupported activation '" + j.at("activation").get<std::string>() + "'");
    if (kind == "linear")
        return Architecture::linear(j.at("input_dim").get<int>(), j.at("class_count").get<int>());
    if (kind == "mlp")
        return Architecture::mlp(j.at("input_dim").get<int>(),
                                 j.at("hidden_dims").get<std::vector<int>>(),
                                 j.at("class_count").get<int>());
    throw ParseError("unknown architecture kind '" + kind + "'");
}

std::vector<std::string> params_to_hex(const Eigen::VectorXd& params) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(params.size()));
    for (Eigen::Index i = 0; i < params.size(); ++i) out.push_back(double_to_hex(params[i]));
    return out;
}

Eigen::VectorXd params_from_hex(const std::vector<std::string>& hex) {
    Eigen::VectorXd params(static_cast<Eigen::Index>(hex.size()));
    for (std::size_t i = 0; i < hex.size(); ++i) params[static_cast<Eigen::Index>(i)] = hex_to_double(hex[i]);
    return params;
}

}  // namespace

std::string model_to_json(const ScoredModel& model) {
    nlohmann::json j{{"format", kModelFormat},
                     {"version", kModelVersion},
                     {"architecture", arch_to_json(model.arch)},
                     {"params", params_to_hex(model.params)}};
    return j.dump(2);
}

ScoredModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model blob: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kModelFormat) throw ParseError("not a model blob");
        if (j.at("version").get<int>() != kModelVersion)
            throw ParseError("unsupported model version " + j.at("version").dump());
        ScoredModel model{arch_from_json(j.at("architecture")),
                          params_from_hex(j.at("params").get<std::vector<std::string>>())};
        if (model.params.size() != model.arch.param_count())
            throw ParseError("parameter count does not match architecture");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model blob: ") + e.what());
    }
}

void save_model(const ScoredModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << model_to_json(model) << "\n";
}

ScoredModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace pbda
