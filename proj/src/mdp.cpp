#include "ssrtb/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ssrtb/errors.hpp"

namespace ssrtb {

void FeatureNorms::validate() const {
    const double vals[] = {impressions, wins,   clicks, purchases, cost,
                           pur_amt,     ppc,    budget, alpha_max};
    for (double v : vals)
        if (!(v > 0.0)) throw ConfigError("FeatureNorms: non-positive normalizer");
    if (slot_count < 1) throw ConfigError("FeatureNorms: slot_count must be >= 1");
}

HourAggregate aggregate_hour(const std::vector<AdImpression>& impressions) {
    HourAggregate a;
    double rank_sum = 0.0, pcvr_sum = 0.0;
    for (const auto& imp : impressions) {
        ++a.impressions;
        pcvr_sum += imp.pcvr;
        if (imp.won) {
            ++a.wins;
            rank_sum += imp.rank;
        }
        if (imp.clicked) {
            ++a.clicks;
            a.cost += imp.price_per_click;
        }
        if (imp.purchased) {
            ++a.purchases;
            a.pur_amt += imp.purchase_amount;
        }
    }
    if (a.impressions > 0) {
        a.ctr = static_cast<double>(a.clicks) / a.impressions;
        a.win_rate = static_cast<double>(a.wins) / a.impressions;
        a.avg_pcvr = pcvr_sum / a.impressions;
    }
    if (a.clicks > 0) {
        a.cvr = static_cast<double>(a.purchases) / a.clicks;
        a.ppc = a.cost / a.clicks;
    }
    if (a.wins > 0) a.avg_rank = rank_sum / a.wins;
    return a;
}

namespace {
double norm_clip(double value, double norm) {
    return std::clamp(value / norm, 0.0, 10.0);
}
} // namespace

MdpState build_state(double budget_left, int step, const HourAggregate& agg,
                     double prev_alpha, const FeatureNorms& norms) {
    norms.validate();
    MdpState s;
    s.budget_left = std::max(budget_left, 0.0);
    s.step = step;
    s.g[0] = std::clamp(s.budget_left / norms.budget, 0.0, 1.0);
    s.g[1] = static_cast<double>(step) / kEpisodeSteps;
    s.g[2] = norm_clip(static_cast<double>(agg.impressions), norms.impressions);
    s.g[3] = norm_clip(static_cast<double>(agg.wins), norms.wins);
    s.g[4] = norm_clip(static_cast<double>(agg.clicks), norms.clicks);
    s.g[5] = norm_clip(static_cast<double>(agg.purchases), norms.purchases);
    s.g[6] = norm_clip(agg.cost, norms.cost);
    s.g[7] = norm_clip(agg.pur_amt, norms.pur_amt);
    s.g[8] = agg.ctr;
    s.g[9] = agg.cvr;
    s.g[10] = norm_clip(agg.ppc, norms.ppc);
    s.g[11] = agg.avg_pcvr;
    s.g[12] = agg.avg_rank / norms.slot_count;
    s.g[13] = agg.win_rate;
    s.g[14] = std::clamp(prev_alpha / norms.alpha_max, 0.0, 10.0);
    for (double v : s.g)
        if (!std::isfinite(v)) throw ContractError("build_state: non-finite feature");
    return s;
}

double step_reward(const HourAggregate& agg) { return agg.pur_amt; }

SimilarityReport similarity(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw ContractError("similarity: vectors of different length");
    if (x.empty()) throw ContractError("similarity: empty vectors");
    double dd = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - y[i];
        dd += d * d;
        xx += x[i] * x[i];
        yy += y[i] * y[i];
    }
    double denom = std::min(xx, yy);
    if (denom == 0.0)
        throw ContractError("similarity: zero vector makes the ratio undefined");
    SimilarityReport r;
    r.ratio = dd / denom;
    r.substitutable = r.ratio < 0.01;
    return r;
}

double eta_bound(double eta) {
    if (eta < 0.0 || eta >= 1.0)
        throw ContractError("eta_bound: eta must be in [0, 1)");
    double q = 2.0 * eta / (1.0 - eta);
    return q * q;
}

const std::array<const char*, kConsistencyFeatures> kConsistencyFeatureNames = {
    "impressions", "wins", "clicks", "purchases", "cost",     "pur_amt",
    "ctr",         "cvr",  "ppc",    "avg_pcvr",  "avg_rank", "win_rate"};

namespace {
double feature_value(const HourAggregate& a, int f) {
    switch (f) {
        case 0: return static_cast<double>(a.impressions);
        case 1: return static_cast<double>(a.wins);
        case 2: return static_cast<double>(a.clicks);
        case 3: return static_cast<double>(a.purchases);
        case 4: return a.cost;
        case 5: return a.pur_amt;
        case 6: return a.ctr;
        case 7: return a.cvr;
        case 8: return a.ppc;
        case 9: return a.avg_pcvr;
        case 10: return a.avg_rank;
        case 11: return a.win_rate;
    }
    throw ContractError("feature_value: bad feature index");
}
} // namespace

ConsistencyReport consistency_check(std::span<const HourAggregate> day_a,
                                    std::span<const HourAggregate> day_b) {
    if (day_a.size() != day_b.size() || day_a.empty())
        throw ContractError("consistency_check: day aggregates must be non-empty and equal length");
    ConsistencyReport report;
    long passed = 0, counted = 0;
    for (std::size_t t = 0; t < day_a.size(); ++t) {
        for (int f = 0; f < kConsistencyFeatures; ++f) {
            ConsistencyCell cell;
            cell.feature = f;
            cell.step = static_cast<int>(t) + 1;
            double va = feature_value(day_a[t], f);
            double vb = feature_value(day_b[t], f);
            double mean = 0.5 * (va + vb);
            if (mean == 0.0) {
                cell.excluded = true;
            } else {
                cell.eta_hat = std::max(std::abs(va - mean), std::abs(vb - mean)) /
                               std::abs(mean);
                cell.pass = cell.eta_hat < 0.03;
                report.max_eta = std::max(report.max_eta, cell.eta_hat);
                ++counted;
                if (cell.pass) ++passed;
            }
            report.cells.push_back(cell);
        }
    }
    report.pass_fraction = counted > 0 ? static_cast<double>(passed) / counted : 0.0;
    report.observation_holds = report.max_eta < 0.03;
    report.implied_ratio = report.max_eta < 1.0 ? eta_bound(report.max_eta) : 1e9;
    report.assumption_holds = report.implied_ratio < 0.01;
    return report;
}

void write_consistency_csv(const ConsistencyReport& report, std::ostream& os) {
    os << "feature,step,eta_hat,pass\n";
    for (const auto& cell : report.cells) {
        if (cell.excluded) {
            os << kConsistencyFeatureNames[cell.feature] << ',' << cell.step
               << ",,excluded\n";
        } else {
            os << kConsistencyFeatureNames[cell.feature] << ',' << cell.step << ','
               << cell.eta_hat << ',' << (cell.pass ? "1" : "0") << '\n';
        }
    }
}

} // namespace ssrtb
