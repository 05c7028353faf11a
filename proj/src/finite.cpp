#include "pbda/finite.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pbda/errors.hpp"
#include "pbda/rng.hpp"

namespace pbda {

namespace {

constexpr double kDualTol = 1e-12;

void check_sample(const FinitePointSample& s, int domain_size, int class_count, bool need_labels) {
    if (s.points.empty()) throw std::invalid_argument("finite sample is empty");
    for (int p : s.points)
        if (p < 0 || p >= domain_size) throw std::invalid_argument("finite sample point out of range");
    if (need_labels) {
        if (s.labels.size() != s.points.size())
            throw std::invalid_argument("finite sample needs one label per point");
        for (int y : s.labels)
            if (y < 0 || y >= class_count) throw std::invalid_argument("finite sample label out of range");
    }
}

// Mean over the sample of a per-point indicator table.
double sample_mean(const std::vector<int>& indicator, const FinitePointSample& s) {
    long sum = 0;
    for (int p : s.points) sum += indicator[static_cast<std::size_t>(p)];
    return static_cast<double>(sum) / static_cast<double>(s.points.size());
}

}  // namespace

void FiniteHypothesisClass::validate() const {
    if (domain_size < 1) throw std::invalid_argument("domain_size must be >= 1");
    if (class_count < 2) throw std::invalid_argument("class_count must be >= 2");
    if (hypotheses.empty()) throw std::invalid_argument("hypothesis class is empty");
    if (hypotheses.size() > 256) throw std::invalid_argument("at most 256 hypotheses supported");
    for (const auto& h : hypotheses) {
        if (static_cast<int>(h.size()) != domain_size)
            throw std::invalid_argument("hypothesis table length != domain_size");
        for (int y : h)
            if (y < 0 || y >= class_count)
                throw std::invalid_argument("hypothesis label out of range");
    }
}

double finite_risk(const std::vector<int>& hypothesis, const FinitePointSample& s) {
    if (s.labels.size() != s.points.size())
        throw std::invalid_argument("finite_risk needs a labeled sample");
    long wrong = 0;
    for (std::size_t i = 0; i < s.points.size(); ++i)
        if (hypothesis[static_cast<std::size_t>(s.points[i])] != s.labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(s.points.size());
}

double finite_disagreement(const std::vector<int>& a, const std::vector<int>& b,
                           const FinitePointSample& s) {
    long diff = 0;
    for (int p : s.points)
        if (a[static_cast<std::size_t>(p)] != b[static_cast<std::size_t>(p)]) ++diff;
    return static_cast<double>(diff) / static_cast<double>(s.points.size());
}

FiniteDualValue exact_hdh(const FinitePointSample& s, const FinitePointSample& t,
                          const FiniteHypothesisClass& fc) {
    fc.validate();
    check_sample(s, fc.domain_size, fc.class_count, false);
    check_sample(t, fc.domain_size, fc.class_count, false);
    const std::size_t H = fc.hypotheses.size();

    // Definition path: sup over hypothesis pairs of |E_s[dis] - E_t[dis]|.
    double definition = 0.0;
    // Reduction path: per branch, ERM over pair-induced indicators with
    // flipped binary targets; value = 1 - min risk sum.
    double min_pq = 1.0;  // phi == 0 everywhere: risk_s(!=1)=1, risk_t(!=0)=0
    double min_uv = 1.0;
    std::vector<int> indicator(static_cast<std::size_t>(fc.domain_size));
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = i; j < H; ++j) {
            const auto& hi = fc.hypotheses[i];
            const auto& hj = fc.hypotheses[j];
            for (int p = 0; p < fc.domain_size; ++p)
                indicator[static_cast<std::size_t>(p)] =
                    hi[static_cast<std::size_t>(p)] != hj[static_cast<std::size_t>(p)] ? 1 : 0;
            const double ds = sample_mean(indicator, s);
            const double dt = sample_mean(indicator, t);
            definition = std::max(definition, std::abs(ds - dt));
            // Branch "disagree on s": risk on s-rows labeled 1 is 1-ds, on
            // t-rows labeled 0 is dt.
            min_pq = std::min(min_pq, (1.0 - ds) + dt);
            min_uv = std::min(min_uv, ds + (1.0 - dt));
        }
    }
    const double pq = 1.0 - min_pq;
    const double uv = 1.0 - min_uv;
    const double reduction = std::max(pq, uv);
    if (std::abs(definition - reduction) > kDualTol)
        throw DualPathMismatch("pair-class divergence paths disagree: definition " +
                               std::to_string(definition) + " vs reduction " +
                               std::to_string(reduction));
    return FiniteDualValue{definition, definition, reduction, pq >= uv ? 0 : 1};
}

FiniteDualValue exact_hdeltah(int h_index, const FinitePointSample& s, const FinitePointSample& t,
                              const FiniteHypothesisClass& fc) {
    fc.validate();
    check_sample(s, fc.domain_size, fc.class_count, false);
    check_sample(t, fc.domain_size, fc.class_count, false);
    if (h_index < 0 || h_index >= static_cast<int>(fc.hypotheses.size()))
        throw std::invalid_argument("hypothesis index out of range");
    const auto& h = fc.hypotheses[static_cast<std::size_t>(h_index)];
    const int C = fc.class_count;

    double definition = 0.0;
    double min_pq = 2.0, min_uv = 2.0;
    std::vector<int> indicator(static_cast<std::size_t>(fc.domain_size));
    std::vector<int> alt(static_cast<std::size_t>(fc.domain_size));
    for (const auto& phi : fc.hypotheses) {
        for (int p = 0; p < fc.domain_size; ++p)
            indicator[static_cast<std::size_t>(p)] =
                h[static_cast<std::size_t>(p)] != phi[static_cast<std::size_t>(p)] ? 1 : 0;
        const double ds = sample_mean(indicator, s);
        const double dt = sample_mean(indicator, t);
        definition = std::max(definition, std::abs(ds - dt));

        // Per-point optimal alternative labeler: the candidate where it
        // differs from h, otherwise the largest label other than the
        // candidate's.
        for (int p = 0; p < fc.domain_size; ++p) {
            const int phip = phi[static_cast<std::size_t>(p)];
            alt[static_cast<std::size_t>(p)] =
                phip != h[static_cast<std::size_t>(p)] ? phip : (phip == C - 1 ? C - 2 : C - 1);
        }
        // Branch with the alternative labels on s and h's labels on t.
        double risk_pq = 0.0;
        for (int p : s.points)
            risk_pq += phi[static_cast<std::size_t>(p)] != alt[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
        risk_pq /= static_cast<double>(s.points.size());
        risk_pq += sample_mean(indicator, t);  // E_t 1[phi != h] == E_t 1[h != phi]
        min_pq = std::min(min_pq, risk_pq);

        // Mirror branch: h's labels on s, alternative labels on t.
        double risk_uv = sample_mean(indicator, s);
        double v = 0.0;
        for (int p : t.points)
            v += phi[static_cast<std::size_t>(p)] != alt[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
        risk_uv += v / static_cast<double>(t.points.size());
        min_uv = std::min(min_uv, risk_uv);
    }
    const double pq = 1.0 - min_pq;
    const double uv = 1.0 - min_uv;
    const double reduction = std::max(pq, uv);
    if (std::abs(definition - reduction) > kDualTol)
        throw DualPathMismatch("anchored divergence paths disagree: definition " +
                               std::to_string(definition) + " vs reduction " +
                               std::to_string(reduction));
    return FiniteDualValue{definition, definition, reduction, pq >= uv ? 0 : 1};
}

double finite_adaptability(const FiniteHypothesisClass& fc, const FinitePointSample& s,
                           const FinitePointSample& t) {
    fc.validate();
    check_sample(s, fc.domain_size, fc.class_count, true);
    check_sample(t, fc.domain_size, fc.class_count, true);
    double best = 2.0;
    for (const auto& h : fc.hypotheses) best = std::min(best, finite_risk(h, s) + finite_risk(h, t));
    return best;
}

FiniteInstance random_finite_instance(int domain_size, int class_count, int hypothesis_count,
                                      int s_size, int t_size, std::uint64_t seed) {
    if (hypothesis_count < 1) throw std::invalid_argument("need at least one hypothesis");
    if (s_size < 1 || t_size < 1) throw std::invalid_argument("sample sizes must be >= 1");
    Rng rng(derive_seed(seed, 0xf1c5ULL));
    FiniteInstance inst;
    inst.fc.domain_size = domain_size;
    inst.fc.class_count = class_count;
    inst.fc.hypotheses.resize(static_cast<std::size_t>(hypothesis_count));
    for (auto& h : inst.fc.hypotheses) {
        h.resize(static_cast<std::size_t>(domain_size));
        for (auto& y : h) y = static_cast<int>(rng.uniform_int(0, class_count - 1));
    }
    auto draw_sample = [&](int n) {
        FinitePointSample sample;
        sample.points.resize(static_cast<std::size_t>(n));
        sample.labels.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            sample.points[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.uniform_int(0, domain_size - 1));
            sample.labels[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.uniform_int(0, class_count - 1));
        }
        return sample;
    };
    inst.s = draw_sample(s_size);
    inst.t = draw_sample(t_size);
    inst.fc.validate();
    return inst;
}

}  // namespace pbda
