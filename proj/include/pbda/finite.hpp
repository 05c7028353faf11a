#pragma once

#include <cstdint>
#include <vector>

namespace pbda {

// Exhaustive-enumeration harness: hypotheses are explicit label tables over a
// finite point domain, so suprema, minima, and risks are computed exactly.
// Used to pin the reduction identities before trusting trained estimators.
struct FiniteHypothesisClass {
    int domain_size = 0;   // grid points, indexed 0..domain_size-1
    int class_count = 0;   // labels 0..class_count-1
    std::vector<std::vector<int>> hypotheses;  // each: label per grid point

    void validate() const;  // throws std::invalid_argument
};

// Empirical sample over the grid; points may repeat (mass = count / size).
// labels may be empty when only the marginal over points is needed.
struct FinitePointSample {
    std::vector<int> points;
    std::vector<int> labels;
};

// Fraction of the sample where the hypothesis label differs from the sample
// label.
double finite_risk(const std::vector<int>& hypothesis, const FinitePointSample& s);

// Fraction of the sample where two hypotheses disagree.
double finite_disagreement(const std::vector<int>& a, const std::vector<int>& b,
                           const FinitePointSample& s);

// Exact symmetric-difference divergence between the point marginals, computed
// two ways — the definition (sup over hypothesis pairs of the disagreement
// gap) and the relabeled-ERM reduction (best of the two branch problems with
// flipped binary targets). Throws DualPathMismatch if the two paths differ by
// more than 1e-12; returns the definition value.
struct FiniteDualValue {
    double value = 0.0;
    double definition_path = 0.0;
    double reduction_path = 0.0;
    int branch = 0;  // 0: disagree-on-s branch won; 1: disagree-on-t branch
};
FiniteDualValue exact_hdh(const FinitePointSample& s, const FinitePointSample& t,
                          const FiniteHypothesisClass& fc);

// Exact model-anchored divergence for hypothesis index h (sup over single
// hypotheses of the disagreement-with-h gap), again via both paths. The
// reduction branch uses the analytic per-point optimal alternative labeler
// (the candidate itself where it differs from h, the largest other label
// where it matches).
FiniteDualValue exact_hdeltah(int h_index, const FinitePointSample& s, const FinitePointSample& t,
                              const FiniteHypothesisClass& fc);

// Exhaustive adaptability: min over the class of R_S(h) + R_T(h).
double finite_adaptability(const FiniteHypothesisClass& fc, const FinitePointSample& s,
                           const FinitePointSample& t);

// Random instance generator for oracle sweeps: a grid of `domain_size`
// points, `hypothesis_count` random label tables, and two random labeled
// samples of the given sizes.
struct FiniteInstance {
    FiniteHypothesisClass fc;
    FinitePointSample s;
    FinitePointSample t;
};
FiniteInstance random_finite_instance(int domain_size, int class_count, int hypothesis_count,
                                      int s_size, int t_size, std::uint64_t seed);

}  // namespace pbda
