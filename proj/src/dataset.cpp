#include "pbda/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pbda/errors.hpp"
#include "pbda/model.hpp"
#include "pbda/rng.hpp"

namespace pbda {

namespace {

void check_features(const Eigen::MatrixXd& features) {
    if (features.rows() == 0 || features.cols() == 0)
        throw std::invalid_argument("sample is empty");
    if (!features.allFinite()) throw std::invalid_argument("sample contains non-finite features");
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = (b == std::string::npos) ? std::string{} : c.substr(b, e - b + 1);
    }
    return cells;
}

double parse_double_cell(const std::string& cell, const std::string& path, int line_no,
                         const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw ParseError(path + ":" + std::to_string(line_no) + ": column '" + column +
                         "': cannot parse '" + cell + "' as a number");
    return v;
}

int parse_label_cell(const std::string& cell, const std::string& path, int line_no,
                     const std::string& column) {
    long v = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || v < 0)
        throw ParseError(path + ":" + std::to_string(line_no) + ": column '" + column +
                         "': cannot parse '" + cell + "' as a non-negative integer label");
    return static_cast<int>(v);
}

}  // namespace

LabeledSample make_labeled(Eigen::MatrixXd features, std::vector<int> labels, int class_count,
                           std::string id) {
    check_features(features);
    if (static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw std::invalid_argument("label count does not match feature rows");
    if (class_count < 2) throw std::invalid_argument("class_count must be at least 2");
    for (int y : labels)
        if (y < 0 || y >= class_count)
            throw std::invalid_argument("label " + std::to_string(y) + " outside 0.." +
                                        std::to_string(class_count - 1));
    return LabeledSample{std::move(features), std::move(labels), class_count, std::move(id)};
}

UnlabeledSample make_unlabeled(Eigen::MatrixXd features, std::string id) {
    check_features(features);
    return UnlabeledSample{std::move(features), std::move(id)};
}

UnlabeledSample strip_labels(const LabeledSample& s) { return UnlabeledSample{s.features, s.id}; }

std::variant<LabeledSample, UnlabeledSample> load_csv(const std::string& path,
                                                      const std::optional<std::string>& label_column) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty file (header row required)");
    const auto header = split_line(line);
    if (header.size() < 1 || (header.size() < 2 && label_column))
        throw ParseError(path + ":1: header has too few columns");

    int label_idx = -1;
    if (label_column) {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == *label_column) label_idx = static_cast<int>(j);
        if (label_idx < 0)
            throw ParseError(path + ":1: label column '" + *label_column + "' not found in header");
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " columns, found " +
                             std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(header.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (static_cast<int>(j) == label_idx)
                labels.push_back(parse_label_cell(cells[j], path, line_no, header[j]));
            else
                row.push_back(parse_double_cell(cells[j], path, line_no, header[j]));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument(path + ": no data rows");

    Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

    if (!label_column) return make_unlabeled(std::move(features), path);

    // Labels must form the dense set {0..max}; remapping would make
    // class_count silently disagree with other samples from the same family.
    const int max_label = *std::max_element(labels.begin(), labels.end());
    std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
    for (int y : labels) seen[static_cast<std::size_t>(y)] = true;
    for (int c = 0; c <= max_label; ++c)
        if (!seen[static_cast<std::size_t>(c)])
            throw ParseError(path + ": label set has a gap: " + std::to_string(c) +
                             " unused while " + std::to_string(max_label) + " is present");
    return make_labeled(std::move(features), std::move(labels), max_label + 1, path);
}

LabeledSample load_labeled_csv(const std::string& path, const std::string& label_column) {
    return std::get<LabeledSample>(load_csv(path, label_column));
}

UnlabeledSample load_unlabeled_csv(const std::string& path) {
    return std::get<UnlabeledSample>(load_csv(path, std::nullopt));
}

void save_csv(const LabeledSample& s, const std::string& path, const std::string& label_column) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    for (Eigen::Index j = 0; j < s.dim(); ++j) out << "x" << j << ",";
    out << label_column << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        for (Eigen::Index j = 0; j < s.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", s.features(i, j));
            out << buf << ",";
        }
        out << s.labels[static_cast<std::size_t>(i)] << "\n";
    }
}

LabeledSample subset(const LabeledSample& s, const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("subset must keep at least one row");
    Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()), s.dim());
    std::vector<int> labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        features.row(static_cast<Eigen::Index>(i)) = s.features.row(rows[i]);
        labels[i] = s.labels[static_cast<std::size_t>(rows[i])];
    }
    return LabeledSample{std::move(features), std::move(labels), s.class_count, s.id};
}

UnlabeledSample subset(const UnlabeledSample& s, const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("subset must keep at least one row");
    Eigen::MatrixXd features(static_cast<Eigen::Index>(rows.size()), s.dim());
    for (std::size_t i = 0; i < rows.size(); ++i)
        features.row(static_cast<Eigen::Index>(i)) = s.features.row(rows[i]);
    return UnlabeledSample{std::move(features), s.id};
}

std::pair<LabeledSample, LabeledSample> random_split(const LabeledSample& s, double fraction,
                                                     std::uint64_t seed) {
    const auto n = s.size();
    if (n < 2) throw std::invalid_argument("random_split needs at least 2 rows");
    if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("fraction must be in [0, 1]");
    const auto k = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n)));
    if (k <= 0 || k >= n)
        throw std::invalid_argument("split would leave an empty part (round(fraction*n) = " +
                                    std::to_string(k) + " of " + std::to_string(n) + ")");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5eedULL));
    rng.shuffle(order);
    std::vector<int> first(order.begin(), order.begin() + k);
    std::vector<int> second(order.begin() + k, order.end());
    return {subset(s, first), subset(s, second)};
}

LabeledSample AdaptationTask::labeled_target() const {
    if (!target_labels) throw std::invalid_argument("task has no target labels");
    return make_labeled(target_features.features, *target_labels, source.class_count,
                        target_features.id);
}

std::string shift_to_string(const ShiftSpec& shift) {
    std::ostringstream os;
    switch (shift.kind) {
        case ShiftSpec::Kind::none: os << "none"; break;
        case ShiftSpec::Kind::rotate: os << "rotate(" << shift.angle_deg << "deg)"; break;
        case ShiftSpec::Kind::noise: os << "noise(" << shift.sigma << ")"; break;
        case ShiftSpec::Kind::label_shift: {
            os << "label_shift(";
            for (std::size_t i = 0; i < shift.class_weights.size(); ++i)
                os << (i ? "," : "") << shift.class_weights[i];
            os << ")";
            break;
        }
        case ShiftSpec::Kind::random_labels: os << "random_labels"; break;
    }
    return os.str();
}

namespace {

Eigen::MatrixXd class_centroids(int class_count, int dim, double radius) {
    Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(class_count, dim);
    for (int c = 0; c < class_count; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / class_count;
        centroids(c, 0) = radius * std::cos(angle);
        centroids(c, 1) = radius * std::sin(angle);
    }
    return centroids;
}

// Blob draw in class-major order followed by a seeded row shuffle, so
// minibatches are not class-sorted.
std::pair<Eigen::MatrixXd, std::vector<int>> draw_blobs(const Eigen::MatrixXd& centroids,
                                                        int per_class_n, Rng& rng) {
    const int C = static_cast<int>(centroids.rows());
    const int d = static_cast<int>(centroids.cols());
    const int n = C * per_class_n;
    Eigen::MatrixXd X(n, d);
    std::vector<int> y(static_cast<std::size_t>(n));
    int row = 0;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < per_class_n; ++i, ++row) {
            X.row(row) = centroids.row(c) + rng.normal_vec(d).transpose();
            y[static_cast<std::size_t>(row)] = c;
        }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    Eigen::MatrixXd Xs(n, d);
    std::vector<int> ys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Xs.row(i) = X.row(order[static_cast<std::size_t>(i)]);
        ys[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    return {std::move(Xs), std::move(ys)};
}

}  // namespace

AdaptationTask make_synthetic_task(const SyntheticSpec& spec) {
    if (spec.class_count < 2) throw std::invalid_argument("synthetic task needs at least 2 classes");
    if (spec.dim < 2) throw std::invalid_argument("synthetic task needs dim >= 2");
    if (spec.per_class_n < 1) throw std::invalid_argument("per_class_n must be >= 1");
    if (spec.radius <= 0.0) throw std::invalid_argument("radius must be positive");
    if (spec.shift.kind == ShiftSpec::Kind::label_shift) {
        if (static_cast<int>(spec.shift.class_weights.size()) != spec.class_count)
            throw std::invalid_argument("label_shift needs one weight per class");
        double sum = 0.0;
        for (double w : spec.shift.class_weights) {
            if (w < 0.0) throw std::invalid_argument("label_shift weights must be non-negative");
            sum += w;
        }
        if (sum <= 0.0) throw std::invalid_argument("label_shift weights must not all be zero");
    }

    const auto centroids = class_centroids(spec.class_count, spec.dim, spec.radius);
    Rng src_rng(derive_seed(spec.seed, 1));
    auto [src_X, src_y] = draw_blobs(centroids, spec.per_class_n, src_rng);

    Eigen::MatrixXd tgt_X;
    std::vector<int> tgt_y;
    Rng tgt_rng(derive_seed(spec.seed, 2));
    switch (spec.shift.kind) {
        case ShiftSpec::Kind::none: {
            auto drawn = draw_blobs(centroids, spec.per_class_n, tgt_rng);
            tgt_X = std::move(drawn.first);
            tgt_y = std::move(drawn.second);
            break;
        }
        case ShiftSpec::Kind::rotate: {
            const double theta = spec.shift.angle_deg * std::numbers::pi / 180.0;
            const double c = std::cos(theta), s = std::sin(theta);
            tgt_X = src_X;
            tgt_y = src_y;
            for (Eigen::Index i = 0; i < tgt_X.rows(); ++i) {
                const double x0 = tgt_X(i, 0), x1 = tgt_X(i, 1);
                tgt_X(i, 0) = c * x0 - s * x1;
                tgt_X(i, 1) = s * x0 + c * x1;
            }
            break;
        }
        case ShiftSpec::Kind::noise: {
            if (spec.shift.sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
            tgt_X = src_X;
            tgt_y = src_y;
            for (Eigen::Index i = 0; i < tgt_X.rows(); ++i)
                tgt_X.row(i) += spec.shift.sigma * tgt_rng.normal_vec(spec.dim).transpose();
            break;
        }
        case ShiftSpec::Kind::label_shift: {
            // Resample class frequencies, drawing fresh points per class blob.
            std::vector<double> cdf(spec.shift.class_weights.size());
            double acc = 0.0;
            for (std::size_t c = 0; c < cdf.size(); ++c) {
                acc += spec.shift.class_weights[c];
                cdf[c] = acc;
            }
            const int n = spec.class_count * spec.per_class_n;
            tgt_X.resize(n, spec.dim);
            tgt_y.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                const double u = tgt_rng.uniform() * acc;
                int c = 0;
                while (u >= cdf[static_cast<std::size_t>(c)] && c + 1 < spec.class_count) ++c;
                tgt_X.row(i) = centroids.row(c) + tgt_rng.normal_vec(spec.dim).transpose();
                tgt_y[static_cast<std::size_t>(i)] = c;
            }
            break;
        }
        case ShiftSpec::Kind::random_labels: {
            // Unstructured data: features drawn uniformly over the data range,
            // labels uniform over classes.
            const int n = spec.class_count * spec.per_class_n;
            const double lim = 1.5 * spec.radius;
            tgt_X.resize(n, spec.dim);
            tgt_y.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < spec.dim; ++j) tgt_X(i, j) = tgt_rng.uniform(-lim, lim);
                tgt_y[static_cast<std::size_t>(i)] =
                    static_cast<int>(tgt_rng.uniform_int(0, spec.class_count - 1));
            }
            break;
        }
    }

    const std::string base = spec.name.empty()
                                 ? "syn-" + std::to_string(spec.seed) + "-" + shift_to_string(spec.shift)
                                 : spec.name;
    AdaptationTask task;
    task.source = make_labeled(std::move(src_X), std::move(src_y), spec.class_count, base + ":source");
    task.target_features = make_unlabeled(std::move(tgt_X), base + ":target");
    task.target_labels = std::move(tgt_y);
    task.shift_descriptor = shift_to_string(spec.shift);
    return task;
}

double empirical_risk(const ScoredModel& model, const LabeledSample& s) {
    if (model.arch.input_dim != s.dim())
        throw std::invalid_argument("model input dim " + std::to_string(model.arch.input_dim) +
                                    " != sample dim " + std::to_string(s.dim()));
    if (model.arch.class_count != s.class_count)
        throw std::invalid_argument("model class count " + std::to_string(model.arch.class_count) +
                                    " != sample class count " + std::to_string(s.class_count));
    const auto preds = model.predict_batch(s.features);
    long wrong = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] != s.labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(preds.size());
}

double error_gap(const ScoredModel& model, const LabeledSample& a, const LabeledSample& b) {
    return std::abs(empirical_risk(model, a) - empirical_risk(model, b));
}

}  // namespace pbda
