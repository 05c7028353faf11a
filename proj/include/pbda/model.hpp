#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace pbda {

// Multiclass scorer shapes: a bare linear map or an MLP with tanh hidden
// layers (at most 3, widths 1..256) and a linear head. Total parameter count
// is capped at 50k so desk-scale sweeps stay cheap.
struct Architecture {
    enum class Kind { linear, mlp };
    Kind kind = Kind::linear;
    int input_dim = 0;
    std::vector<int> hidden_dims;  // empty iff linear
    int class_count = 0;

    static Architecture linear(int input_dim, int class_count);
    static Architecture mlp(int input_dim, std::vector<int> hidden_dims, int class_count);

    // Layer widths including input and output: [d, h..., C].
    std::vector<int> widths() const;
    int layer_count() const;  // number of linear layers
    int param_count() const;
    void validate() const;  // throws std::invalid_argument

    bool operator==(const Architecture&) const = default;
};

// Flat-parameter scorer. Layout: for each linear layer, the weight matrix
// (out x in, row-major) followed by the bias (out). Keeping parameters flat
// makes Gaussian posteriors, KL terms, and finite-difference checks trivial.
struct ScoredModel {
    Architecture arch;
    Eigen::VectorXd params;

    Eigen::VectorXd scores(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::MatrixXd scores_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;  // n x C
    int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    std::vector<int> predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

// Argmax with ties resolved toward the least label.
int argmax_least(const Eigen::Ref<const Eigen::VectorXd>& scores);

// Fan-in-scaled symmetric uniform init, deterministic per seed.
ScoredModel init_model(const Architecture& arch, std::uint64_t seed);
Eigen::VectorXd init_params(const Architecture& arch, std::uint64_t seed);

// Whether two scorers put the same label on x.
bool disagree(const ScoredModel& a, const ScoredModel& b, const Eigen::Ref<const Eigen::VectorXd>& x);

// --- backprop machinery ---------------------------------------------------

// Cached activations of one batched forward pass. act[0] is the input batch;
// act[i] (i >= 1) is the output of hidden layer i; scores is the head output.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> act;
    Eigen::MatrixXd scores;  // n x C
};

ForwardTrace forward_trace(const Architecture& arch, const Eigen::VectorXd& params,
                           const Eigen::Ref<const Eigen::MatrixXd>& X);

// Backpropagates dL/dscores, accumulating dL/dparams into grad (not zeroed
// here). If dX is non-null it receives dL/dinput.
void backward_trace(const Architecture& arch, const Eigen::VectorXd& params, const ForwardTrace& trace,
                    const Eigen::Ref<const Eigen::MatrixXd>& dscores, Eigen::VectorXd& grad,
                    Eigen::MatrixXd* dX = nullptr);

// Backpropagates a gradient on the representation (input of the final layer)
// through the trunk only; head parameter slots are untouched.
void backward_from_representation(const Architecture& arch, const Eigen::VectorXd& params,
                                  const ForwardTrace& trace,
                                  const Eigen::Ref<const Eigen::MatrixXd>& drep, Eigen::VectorXd& grad);

// --- head/trunk split -----------------------------------------------------

// View of a model as feature map + linear head. For linear models the feature
// map is the identity. Recomposition head(feature_map(x)) reproduces
// scores(x) exactly (same op order).
struct HeadSplit {
    Architecture full_arch;
    Eigen::VectorXd full_params;
    ScoredModel head;  // linear model on representation space

    int representation_dim() const { return head.arch.input_dim; }
    Eigen::VectorXd feature_map(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::MatrixXd feature_map_batch(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

HeadSplit split_head(const ScoredModel& model);

// Index of the first head parameter in the flat layout; the head occupies
// [offset, param_count).
int head_param_offset(const Architecture& arch);

// Replaces the head parameters of `model` with `head_params`, leaving the
// trunk untouched.
ScoredModel with_head_params(const ScoredModel& model, const Eigen::VectorXd& head_params);

// --- serialization ----------------------------------------------------------

// Versioned JSON blob; parameter round-trip is bit-exact.
std::string model_to_json(const ScoredModel& model);
ScoredModel model_from_json(const std::string& text);
void save_model(const ScoredModel& model, const std::string& path);
ScoredModel load_model(const std::string& path);

}  // namespace pbda
