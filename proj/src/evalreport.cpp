#include "povmap/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "povmap/common.hpp"

namespace povmap::evalreport {

namespace {

void require_finite(const std::vector<double> &v, const char *what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Error("BadValue", std::string(what) + " contains a non-finite value");
        }
    }
}

void require_same_length(std::size_t a, std::size_t b, const char *what) {
    if (a != b) {
        throw Error("LengthMismatch", std::string(what) + ": " + std::to_string(a) +
                                          " vs " + std::to_string(b));
    }
}

bool is_constant(const std::vector<double> &v) {
    for (double x : v) {
        if (x != v.front()) return false;
    }
    return true;
}

// Correlation without the precondition throws, for report paths where an
// undefined r is just left blank.
bool pearson_raw(const std::vector<double> &x, const std::vector<double> &y, double &out) {
    if (x.size() < 2 || is_constant(x) || is_constant(y)) return false;
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return false;
    out = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    return true;
}

// Gaussian elimination with partial pivoting on the 3x3 normal equations.
bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b,
            std::array<double, 3> &out) {
    double scale = 1.0;
    for (const auto &row : a) {
        for (double v : row) scale = std::max(scale, std::fabs(v));
    }
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        }
        if (std::fabs(a[piv][col]) < 1e-12 * scale) return false;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double acc = b[col];
        for (int c = col + 1; c < 3; ++c) acc -= a[col][c] * out[c];
        out[col] = acc / a[col][col];
    }
    return true;
}

std::string dash() { return "-"; }

nlohmann::json finite_or_null(double v, bool defined) {
    if (!defined || !std::isfinite(v)) return nullptr;
    return v;
}

nlohmann::json series_json(const SeriesStats &s) {
    nlohmann::json j;
    j["n"] = s.n;
    j["pearson_r"] = finite_or_null(s.r, s.r_defined);
    if (s.has_fit) {
        j["coeffs"] = {s.coeffs[0], s.coeffs[1], s.coeffs[2]};
    } else {
        j["coeffs"] = nullptr;
    }
    return j;
}

void append_series_rows(csv::Table &t, const std::string &source,
                        const std::array<SeriesStats, 2> &groups) {
    static const char *kGroups[2] = {"rural", "urban"};
    for (int g = 0; g < 2; ++g) {
        const SeriesStats &s = groups[g];
        std::vector<std::string> row;
        row.push_back(kGroups[g]);
        row.push_back(source);
        row.push_back(std::to_string(s.n));
        row.push_back(s.r_defined ? format_double(s.r) : dash());
        for (int c = 0; c < 3; ++c) {
            row.push_back(s.has_fit ? format_double(s.coeffs[c]) : dash());
        }
        t.rows.push_back(std::move(row));
    }
}

void append_metrics_cells(std::vector<std::string> &row, const EvalMetrics &m) {
    row.push_back(format_double(m.eps_mu));
    row.push_back(format_double(m.eps_sigma));
    row.push_back(format_double(m.rmse_mu));
    row.push_back(format_double(m.rmse_sigma));
    row.push_back(std::to_string(m.n_test));
}

} // namespace

double mean(const std::vector<double> &values) {
    if (values.empty()) throw Error("TooFew", "mean of an empty vector");
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

double population_std(const std::vector<double> &values) {
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) {
        const double d = v - m;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(values.size()));
}

double rmse(const std::vector<double> &y_true, const std::vector<double> &y_pred) {
    require_same_length(y_true.size(), y_pred.size(), "rmse inputs");
    if (y_true.empty()) throw Error("TooFew", "rmse of empty vectors");
    require_finite(y_true, "y_true");
    require_finite(y_pred, "y_pred");
    double ss = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double d = y_true[i] - y_pred[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(y_true.size()));
}

double nrmse(const std::vector<double> &y_true, const std::vector<double> &y_pred) {
    require_same_length(y_true.size(), y_pred.size(), "nrmse inputs");
    if (y_true.size() < 2) throw Error("TooFew", "nrmse needs at least 2 points");
    require_finite(y_true, "y_true");
    require_finite(y_pred, "y_pred");
    if (is_constant(y_true)) {
        throw Error("ConstantTruth", "nrmse denominator undefined for constant truth");
    }
    const double denom = population_std(y_true);
    if (!(denom > 0.0)) {
        throw Error("ConstantTruth", "nrmse denominator collapsed to zero");
    }
    return rmse(y_true, y_pred) / denom;
}

double nrmse_scaled(const std::vector<double> &y_true, const std::vector<double> &y_pred,
                    double denominator) {
    require_same_length(y_true.size(), y_pred.size(), "nrmse inputs");
    if (y_true.size() < 2) throw Error("TooFew", "nrmse needs at least 2 points");
    if (!std::isfinite(denominator) || denominator <= 0.0) {
        throw Error("BadDenominator", "nrmse denominator must be a positive finite value");
    }
    return rmse(y_true, y_pred) / denominator;
}

EvalMetrics evaluate_predictions(const std::vector<double> &mu_true,
                                 const std::vector<double> &sigma_true,
                                 const std::vector<double> &mu_pred,
                                 const std::vector<double> &sigma_pred) {
    require_same_length(mu_true.size(), sigma_true.size(), "target vectors");
    require_same_length(mu_true.size(), mu_pred.size(), "mu vectors");
    require_same_length(sigma_true.size(), sigma_pred.size(), "sigma vectors");
    EvalMetrics m;
    m.n_test = mu_true.size();
    m.rmse_mu = rmse(mu_true, mu_pred);
    m.rmse_sigma = rmse(sigma_true, sigma_pred);
    m.eps_mu = nrmse(mu_true, mu_pred);
    m.eps_sigma = nrmse(sigma_true, sigma_pred);
    return m;
}

EvalMetrics evaluate_model(const gbrt::GBRTEnsemble &model, const gbrt::Dataset &test) {
    const auto preds = gbrt::predict(model, test.columns, test.rows);
    require_same_length(preds.size(), test.targets.size(), "predictions vs targets");
    std::vector<double> mu_true(preds.size()), sigma_true(preds.size());
    std::vector<double> mu_pred(preds.size()), sigma_pred(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        mu_true[i] = test.targets[i][0];
        sigma_true[i] = test.targets[i][1];
        mu_pred[i] = preds[i][0];
        sigma_pred[i] = preds[i][1];
    }
    return evaluate_predictions(mu_true, sigma_true, mu_pred, sigma_pred);
}

std::vector<int> quintile_bins(const std::vector<double> &values) {
    const std::size_t n = values.size();
    if (n < kQuintiles) {
        throw Error("TooFew", "quintiles need at least 5 values, got " + std::to_string(n));
    }
    require_finite(values, "quintile values");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<int> bins(n, 0);
    const std::size_t base = n / kQuintiles;
    const std::size_t extra = n % kQuintiles;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < kQuintiles; ++b) {
        const std::size_t size = base + (b < extra ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) bins[order[pos++]] = static_cast<int>(b);
    }
    return bins;
}

IntersectionTable intersection_table(const std::vector<bool> &urban,
                                     const std::vector<double> &mu_true,
                                     const std::vector<double> &mu_pred) {
    require_same_length(urban.size(), mu_true.size(), "settlement flags vs truth");
    require_same_length(mu_true.size(), mu_pred.size(), "truth vs predictions");
    require_finite(mu_pred, "mu_pred");

    IntersectionTable t;
    t.n = mu_true.size();
    t.quintile = quintile_bins(mu_true);

    std::array<std::array<double, kQuintiles>, 2> ss{};
    double total_ss = 0.0;
    for (std::size_t i = 0; i < t.n; ++i) {
        const double d = mu_true[i] - mu_pred[i];
        const int s = urban[i] ? 1 : 0;
        ss[s][static_cast<std::size_t>(t.quintile[i])] += d * d;
        t.cells[s][static_cast<std::size_t>(t.quintile[i])].count += 1;
        total_ss += d * d;
    }
    for (int s = 0; s < 2; ++s) {
        for (std::size_t q = 0; q < kQuintiles; ++q) {
            IntersectionCell &cell = t.cells[s][q];
            if (cell.count > 0) {
                cell.rmse_mu = std::sqrt(ss[s][q] / static_cast<double>(cell.count));
            }
        }
    }
    t.overall_rmse_mu = std::sqrt(total_ss / static_cast<double>(t.n));
    return t;
}

SeriesStats series_stats(const std::vector<double> &mu, const std::vector<double> &sigma) {
    require_same_length(mu.size(), sigma.size(), "mu vs sigma");
    SeriesStats s;
    s.n = mu.size();
    if (s.n == 0) return s;
    require_finite(mu, "mu");
    require_finite(sigma, "sigma");
    s.r_defined = pearson_raw(mu, sigma, s.r);

    std::vector<double> distinct(mu);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (s.n < 3 || distinct.size() < 3) return s;

    // Normal equations for sigma ~ c0 + c1*mu + c2*mu^2.
    std::array<double, 5> p{}; // sums of mu^0 .. mu^4
    std::array<double, 3> q{}; // sums of sigma * mu^0 .. mu^2
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double m1 = mu[i];
        const double m2 = m1 * m1;
        p[0] += 1.0;
        p[1] += m1;
        p[2] += m2;
        p[3] += m2 * m1;
        p[4] += m2 * m2;
        q[0] += sigma[i];
        q[1] += sigma[i] * m1;
        q[2] += sigma[i] * m2;
    }
    const std::array<std::array<double, 3>, 3> a{{{p[0], p[1], p[2]},
                                                  {p[1], p[2], p[3]},
                                                  {p[2], p[3], p[4]}}};
    s.has_fit = solve3(a, q, s.coeffs);
    if (!s.has_fit) s.coeffs = {};
    return s;
}

VariabilityReport variability(const std::vector<bool> &urban,
                              const std::vector<double> &mu_pred,
                              const std::vector<double> &sigma_pred,
                              const std::vector<double> &mu_true,
                              const std::vector<double> &sigma_true) {
    require_same_length(urban.size(), mu_pred.size(), "settlement flags vs predictions");
    require_same_length(mu_pred.size(), sigma_pred.size(), "predicted mu vs sigma");
    require_same_length(urban.size(), mu_true.size(), "settlement flags vs truth");
    require_same_length(mu_true.size(), sigma_true.size(), "true mu vs sigma");

    VariabilityReport rep;
    for (int g = 0; g < 2; ++g) {
        std::vector<double> pm, ps, tm, ts;
        for (std::size_t i = 0; i < urban.size(); ++i) {
            if ((urban[i] ? 1 : 0) != g) continue;
            pm.push_back(mu_pred[i]);
            ps.push_back(sigma_pred[i]);
            tm.push_back(mu_true[i]);
            ts.push_back(sigma_true[i]);
        }
        rep.predicted[g] = series_stats(pm, ps);
        rep.actual[g] = series_stats(tm, ts);
    }
    return rep;
}

double pearson(const std::vector<double> &x, const std::vector<double> &y) {
    require_same_length(x.size(), y.size(), "pearson inputs");
    if (x.size() < 2) throw Error("TooFew", "pearson needs at least 2 points");
    require_finite(x, "x");
    require_finite(y, "y");
    if (is_constant(x) || is_constant(y)) {
        throw Error("ConstantInput", "pearson undefined for a constant input");
    }
    double r = 0.0;
    if (!pearson_raw(x, y, r)) {
        throw Error("ConstantInput", "pearson denominator collapsed to zero");
    }
    return r;
}

TransferMatrix transfer(const gbrt::GBRTEnsemble &model_a, const gbrt::GBRTEnsemble &model_b,
                        const gbrt::Dataset &test_a, const gbrt::Dataset &test_b) {
    if (model_a.columns != model_b.columns) {
        throw Error("ColumnMismatch", "transfer needs models with a shared column manifest");
    }
    TransferMatrix m;
    m.cells[0][0] = evaluate_model(model_a, test_a);
    m.cells[0][1] = evaluate_model(model_a, test_b);
    m.cells[1][0] = evaluate_model(model_b, test_a);
    m.cells[1][1] = evaluate_model(model_b, test_b);
    return m;
}

csv::Table metrics_csv(const std::vector<std::pair<std::string, EvalMetrics>> &rows) {
    csv::Table t;
    t.path = "metrics.csv";
    t.header = {"label", "eps_mu", "eps_sigma", "rmse_mu", "rmse_sigma", "n_test"};
    for (const auto &[label, m] : rows) {
        std::vector<std::string> row{label};
        append_metrics_cells(row, m);
        t.rows.push_back(std::move(row));
    }
    return t;
}

csv::Table intersection_csv(const IntersectionTable &t) {
    csv::Table out;
    out.path = "intersection.csv";
    out.header = {"settlement"};
    for (std::size_t q = 1; q <= kQuintiles; ++q) out.header.push_back("Q" + std::to_string(q));
    for (std::size_t q = 1; q <= kQuintiles; ++q) {
        out.header.push_back("Q" + std::to_string(q) + "_n");
    }
    static const char *kGroups[2] = {"rural", "urban"};
    for (int s = 0; s < 2; ++s) {
        std::vector<std::string> row{kGroups[s]};
        for (std::size_t q = 0; q < kQuintiles; ++q) {
            const IntersectionCell &cell = t.cells[s][q];
            row.push_back(cell.present() ? format_double(cell.rmse_mu) : dash());
        }
        for (std::size_t q = 0; q < kQuintiles; ++q) {
            row.push_back(std::to_string(t.cells[s][q].count));
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

csv::Table variability_csv(const VariabilityReport &r) {
    csv::Table t;
    t.path = "variability.csv";
    t.header = {"group", "source", "n", "pearson_r", "c0", "c1", "c2"};
    append_series_rows(t, "predicted", r.predicted);
    append_series_rows(t, "true", r.actual);
    return t;
}

csv::Table transfer_csv(const TransferMatrix &m, const std::string &name_a,
                        const std::string &name_b) {
    csv::Table t;
    t.path = "transfer.csv";
    t.header = {"train", "eval", "eps_mu", "eps_sigma", "rmse_mu", "rmse_sigma", "n_test"};
    const std::array<std::string, 2> names{name_a, name_b};
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            std::vector<std::string> row{names[i], names[j]};
            append_metrics_cells(row, m.cells[i][j]);
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

nlohmann::json metrics_json(const EvalMetrics &m) {
    nlohmann::json j;
    j["eps_mu"] = m.eps_mu;
    j["eps_sigma"] = m.eps_sigma;
    j["rmse_mu"] = m.rmse_mu;
    j["rmse_sigma"] = m.rmse_sigma;
    j["n_test"] = m.n_test;
    return j;
}

nlohmann::json intersection_json(const IntersectionTable &t) {
    nlohmann::json j;
    j["n"] = t.n;
    j["overall_rmse_mu"] = t.overall_rmse_mu;
    static const char *kGroups[2] = {"rural", "urban"};
    for (int s = 0; s < 2; ++s) {
        nlohmann::json cells = nlohmann::json::array();
        for (std::size_t q = 0; q < kQuintiles; ++q) {
            const IntersectionCell &cell = t.cells[s][q];
            nlohmann::json c;
            c["count"] = cell.count;
            c["rmse_mu"] = cell.present() ? nlohmann::json(cell.rmse_mu) : nullptr;
            cells.push_back(std::move(c));
        }
        j["cells"][kGroups[s]] = std::move(cells);
    }
    return j;
}

nlohmann::json variability_json(const VariabilityReport &r) {
    nlohmann::json j;
    static const char *kGroups[2] = {"rural", "urban"};
    for (int g = 0; g < 2; ++g) {
        j["predicted"][kGroups[g]] = series_json(r.predicted[g]);
        j["true"][kGroups[g]] = series_json(r.actual[g]);
    }
    return j;
}

nlohmann::json transfer_json(const TransferMatrix &m, const std::string &name_a,
                             const std::string &name_b) {
    nlohmann::json j;
    j["countries"] = {name_a, name_b};
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j2 = 0; j2 < 2; ++j2) row.push_back(metrics_json(m.cells[i][j2]));
        rows.push_back(std::move(row));
    }
    j["cells"] = std::move(rows);
    return j;
}

} // namespace povmap::evalreport
