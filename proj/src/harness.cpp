#include "ssrtb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssrtb/errors.hpp"

namespace ssrtb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr double kUnlimitedBudget = 1e12;

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}
} // namespace

void ExperimentConfig::validate() const {
    if (ads.empty()) throw ConfigError("config: at least one ad is required");
    if (auctions_per_day <= 0.0) throw ConfigError("config: auctions_per_day must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("config: lambda out of [0,1]");
    if (test_days < 1) throw ConfigError("config: test_days must be >= 1");
    if (calibration_days < 1) throw ConfigError("config: calibration_days must be >= 1");
    if (alpha_calibration_days < 1 || alpha_calibration_days > calibration_days)
        throw ConfigError("config: alpha_calibration_days out of range");
    if (amdp_block_size < 1) throw ConfigError("config: amdp_block_size must be >= 1");
    if (amdp_gamma < 0.0 || amdp_gamma > 1.0)
        throw ConfigError("config: amdp_gamma must be in [0, 1]");
    if (amdp_price_ref < 0.0) throw ConfigError("config: amdp_price_ref must be >= 0");
    if (equal_cost_tolerance <= 0.0)
        throw ConfigError("config: equal_cost_tolerance must be positive");
    if (consistency.pairs < 1) throw ConfigError("config: consistency.pairs must be >= 1");
    if (consistency.auctions_per_day <= 0.0)
        throw ConfigError("config: consistency.auctions_per_day must be positive");
    profile.validate();
    trainer.validate();
    std::set<std::string> ids;
    for (const auto& ac : ads) {
        if (ac.ad.id.empty()) throw ConfigError("config: ad with empty id");
        if (!ids.insert(ac.ad.id).second)
            throw ConfigError("config: duplicate ad id " + ac.ad.id);
        if (!(ac.ad.daily_budget > 0.0))
            throw ConfigError("config: daily_budget must be positive for ad " + ac.ad.id);
        if (ac.ad.keyword_tuples.empty())
            throw ConfigError("config: ad " + ac.ad.id + " has no keywords");
        std::set<std::string> kws;
        for (const auto& kt : ac.ad.keyword_tuples) {
            if (kt.belong_ad != ac.ad.id)
                throw ConfigError("config: keyword tuple of ad " + ac.ad.id +
                                  " claims belong_ad " + kt.belong_ad);
            if (kt.bidprice < 0.0)
                throw ConfigError("config: negative bidprice for ad " + ac.ad.id);
            if (!kws.insert(kt.keyword).second)
                throw ConfigError("config: duplicate keyword " + kt.keyword + " in ad " +
                                  ac.ad.id);
        }
        if (ac.alpha_ref_given && !(ac.ad.alpha_ref > 0.0))
            throw ConfigError("config: alpha_ref must be positive for ad " + ac.ad.id);
    }
}

namespace {
template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

DayProfile profile_from_json(const json& root, double auctions_per_day) {
    DayProfile p = DayProfile::default_profile(auctions_per_day);
    if (!root.contains("profile")) return p;
    const json& j = root.at("profile");
    maybe(j, "competitors_per_auction", p.competitors_per_auction);
    maybe(j, "slot_count", p.slot_count);
    maybe(j, "reserve", p.reserve);
    maybe(j, "position_bias", p.position_bias);
    maybe(j, "cvr_noise", p.cvr_noise);
    maybe(j, "competition_day_jitter", p.competition_day_jitter);
    maybe(j, "value_bins_per_hour", p.value_bins_per_hour);
    maybe(j, "value_day_sigma", p.value_day_sigma);
    maybe(j, "value_pattern_repeats", p.value_pattern_repeats);
    maybe(j, "competition_day_sigma", p.competition_day_sigma);
    if (j.contains("hourly_intensity")) {
        auto v = j.at("hourly_intensity").get<std::vector<double>>();
        if (v.size() != 24) throw ConfigError("config: hourly_intensity needs 24 entries");
        std::copy(v.begin(), v.end(), p.hourly_intensity.begin());
    }
    if (j.contains("hourly_cvr_multiplier")) {
        auto v = j.at("hourly_cvr_multiplier").get<std::vector<double>>();
        if (v.size() != 24)
            throw ConfigError("config: hourly_cvr_multiplier needs 24 entries");
        std::copy(v.begin(), v.end(), p.hourly_cvr_multiplier.begin());
    }
    if (j.contains("hourly_competition")) {
        auto v = j.at("hourly_competition").get<std::vector<double>>();
        if (v.size() != 24)
            throw ConfigError("config: hourly_competition needs 24 entries");
        std::copy(v.begin(), v.end(), p.hourly_competition.begin());
    }
    if (j.contains("competitor_pool")) {
        p.competitor_pool.clear();
        for (const auto& cj : j.at("competitor_pool")) {
            CompetitorSpec spec;
            maybe(cj, "bidscore_mu", spec.bidscore_mu);
            maybe(cj, "bidscore_sigma", spec.bidscore_sigma);
            maybe(cj, "bid_mu", spec.bid_mu);
            maybe(cj, "bid_sigma", spec.bid_sigma);
            p.competitor_pool.push_back(spec);
        }
    }
    return p;
}
} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    if (!root.contains("seed"))
        throw ConfigError("config: seed is mandatory (no wall-clock seeding)");
    cfg.seed = root.at("seed").get<std::uint64_t>();
    maybe(root, "auctions_per_day", cfg.auctions_per_day);
    cfg.profile = profile_from_json(root, cfg.auctions_per_day);
    maybe(root, "lambda", cfg.lambda);
    maybe(root, "test_days", cfg.test_days);
    maybe(root, "calibration_days", cfg.calibration_days);
    maybe(root, "alpha_calibration_days", cfg.alpha_calibration_days);
    maybe(root, "amdp_block_size", cfg.amdp_block_size);
    maybe(root, "amdp_gamma", cfg.amdp_gamma);
    maybe(root, "amdp_price_ref", cfg.amdp_price_ref);
    maybe(root, "equal_cost_tolerance", cfg.equal_cost_tolerance);
    if (root.contains("trainer")) {
        const json& t = root.at("trainer");
        maybe(t, "gamma", cfg.trainer.gamma);
        maybe(t, "learning_rate", cfg.trainer.learning_rate);
        maybe(t, "batch_size", cfg.trainer.batch_size);
        maybe(t, "updates_per_step", cfg.trainer.updates_per_step);
        if (t.contains("hidden_sizes")) {
            auto hidden = t.at("hidden_sizes").get<std::vector<int>>();
            std::vector<int> sizes = {kFeatureDim};
            sizes.insert(sizes.end(), hidden.begin(), hidden.end());
            sizes.push_back(kActionCount);
            cfg.trainer.layer_sizes = std::move(sizes);
        }
        maybe(t, "target_sync_period", cfg.trainer.target_sync_period);
        maybe(t, "memory_capacity", cfg.trainer.memory_capacity);
        maybe(t, "episodes", cfg.trainer.episodes);
        maybe(t, "epsilon_start", cfg.trainer.epsilon_start);
        maybe(t, "epsilon_end", cfg.trainer.epsilon_end);
        maybe(t, "epsilon_decay_fraction", cfg.trainer.epsilon_decay_fraction);
        maybe(t, "rmsprop_decay", cfg.trainer.rmsprop_decay);
        maybe(t, "rmsprop_epsilon", cfg.trainer.rmsprop_epsilon);
    }
    if (root.contains("consistency")) {
        const json& c = root.at("consistency");
        maybe(c, "pairs", cfg.consistency.pairs);
        maybe(c, "auctions_per_day", cfg.consistency.auctions_per_day);
        maybe(c, "probe_alpha", cfg.consistency.probe_alpha);
        maybe(c, "probe_beta_a", cfg.consistency.probe_beta_a);
        maybe(c, "probe_beta_b", cfg.consistency.probe_beta_b);
        maybe(c, "probe_ctr_base", cfg.consistency.probe_ctr_base);
    }
    if (!root.contains("ads")) throw ConfigError("config: ads array is mandatory");
    for (const auto& aj : root.at("ads")) {
        AdConfig ac;
        ac.ad.id = aj.at("id").get<std::string>();
        ac.ad.daily_budget = aj.at("daily_budget").get<double>();
        if (aj.contains("alpha_ref")) {
            ac.ad.alpha_ref = aj.at("alpha_ref").get<double>();
            ac.alpha_ref_given = true;
        }
        for (const auto& kj : aj.at("keywords")) {
            KeywordTuple kt;
            kt.belong_ad = ac.ad.id;
            kt.keyword = kj.at("keyword").get<std::string>();
            kt.bidprice = kj.at("bidprice").get<double>();
            ac.ad.keyword_tuples.push_back(std::move(kt));
        }
        if (aj.contains("market")) {
            const json& m = aj.at("market");
            maybe(m, "pcvr_beta_a", ac.market.pcvr_beta_a);
            maybe(m, "pcvr_beta_b", ac.market.pcvr_beta_b);
            maybe(m, "ctr_base", ac.market.ctr_base);
            maybe(m, "purchase_amount_mean", ac.market.purchase_amount_mean);
            maybe(m, "bidscore_mu", ac.market.bidscore_mu);
            maybe(m, "bidscore_sigma", ac.market.bidscore_sigma);
        }
        cfg.ads.push_back(std::move(ac));
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

ConvergenceSummary emit_convergence(const TrainLog& log, const std::string& dir,
                                    const std::string& prefix) {
    ensure_dir(dir);
    auto loss_os = open_out(dir + "/" + prefix + "_loss.csv");
    loss_os << "batches,loss\n";
    for (const auto& row : log.rows) loss_os << row.batch << ',' << row.loss << '\n';

    auto pur_os = open_out(dir + "/" + prefix + "_pur.csv");
    pur_os << "batches,pur_amt\n";
    // Map each episode to the train-step count reached at its end.
    std::vector<long> episode_end_batch(log.episode_pur_amt.size(), 0);
    for (const auto& row : log.rows) {
        if (row.episode >= 1 &&
            row.episode <= static_cast<int>(episode_end_batch.size()))
            episode_end_batch[row.episode - 1] =
                std::max(episode_end_batch[row.episode - 1], row.batch);
    }
    long last = 0;
    for (std::size_t i = 0; i < log.episode_pur_amt.size(); ++i) {
        if (episode_end_batch[i] == 0) episode_end_batch[i] = last;
        last = episode_end_batch[i];
        pur_os << episode_end_batch[i] << ',' << log.episode_pur_amt[i] << '\n';
    }

    ConvergenceSummary s;
    auto decile_means = [](const std::vector<double>& v, double& first, double& final_) {
        if (v.empty()) return;
        std::size_t k = std::max<std::size_t>(1, v.size() / 10);
        first = std::accumulate(v.begin(), v.begin() + k, 0.0) / k;
        final_ = std::accumulate(v.end() - k, v.end(), 0.0) / k;
    };
    std::vector<double> losses;
    losses.reserve(log.rows.size());
    for (const auto& row : log.rows) losses.push_back(row.loss);
    decile_means(losses, s.loss_first_decile, s.loss_final_decile);
    decile_means(log.episode_pur_amt, s.pur_first_decile, s.pur_final_decile);
    s.loss_improved = !losses.empty() && s.loss_final_decile < s.loss_first_decile;
    s.pur_improved =
        !log.episode_pur_amt.empty() && s.pur_final_decile > s.pur_first_decile;

    auto sum_os = open_out(dir + "/" + prefix + "_summary.csv");
    sum_os << "series,first_decile_mean,final_decile_mean,improved\n";
    sum_os << "loss," << s.loss_first_decile << ',' << s.loss_final_decile << ','
           << (s.loss_improved ? 1 : 0) << '\n';
    sum_os << "pur_amt," << s.pur_first_decile << ',' << s.pur_final_decile << ','
           << (s.pur_improved ? 1 : 0) << '\n';
    return s;
}

Lab::Lab(ExperimentConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<Ad> Lab::all_ads() const {
    std::vector<Ad> ads;
    for (const auto& ac : cfg_.ads) ads.push_back(ac.ad);
    return ads;
}

std::map<std::string, AdMarketModel> Lab::all_models() const {
    std::map<std::string, AdMarketModel> m;
    for (const auto& ac : cfg_.ads) m[ac.ad.id] = ac.market;
    return m;
}

const AuctionLog& Lab::train_day() const {
    if (!train_day_)
        train_day_ = generate_day(substream_seed(cfg_.seed, "train-day", 0), cfg_.profile,
                                  all_ads(), all_models());
    return *train_day_;
}

AuctionLog Lab::test_day(int index) const {
    return generate_day(substream_seed(cfg_.seed, "test-day", index), cfg_.profile,
                        all_ads(), all_models());
}

void Lab::derive_all() const {
    if (!derived_.empty()) return;
    const int n_days = cfg_.calibration_days;
    std::vector<AuctionLog> days;
    for (int d = 0; d < n_days; ++d)
        days.push_back(generate_day(substream_seed(cfg_.seed, "calib-day", d),
                                    cfg_.profile, all_ads(), all_models()));

    for (std::size_t ai = 0; ai < cfg_.ads.size(); ++ai) {
        const AdConfig& ac = cfg_.ads[ai];
        AdDerived ad;
        ad.ad = ac.ad;
        ad.market = ac.market;
        for (const auto& kt : ac.ad.keyword_tuples) ad.presets[kt.keyword] = kt.bidprice;

        // KB calibration runs: normalizers and the KB cost scale.
        HourAggregate sums;
        std::vector<double> kb_costs;
        for (int d = 0; d < n_days; ++d) {
            KbPolicy kb(ad.presets);
            Rng rng = substream(cfg_.seed, "calib-resp-" + ad.ad.id, d);
            EpisodeResult res =
                run_episode(days[d], ad.ad.id, kb, ac.ad.daily_budget, rng, cfg_.profile);
            kb_costs.push_back(res.totals.cost);
            sums.impressions += res.totals.impressions;
            sums.wins += res.totals.wins;
            sums.clicks += res.totals.clicks;
            sums.purchases += res.totals.purchases;
            sums.cost += res.totals.cost;
            sums.pur_amt += res.totals.pur_amt;
        }
        ad.kb_mean_cost = mean_of(kb_costs);
        if (!(ad.kb_mean_cost > 0.0))
            throw ConfigError("calibration: KB never pays on ad " + ad.ad.id +
                              "; presets or market too weak");
        const double cells = static_cast<double>(n_days) * kEpisodeSteps;
        auto norm = [&](double total) { return std::max(total / cells, 1e-6); };
        ad.norms.impressions = norm(static_cast<double>(sums.impressions));
        ad.norms.wins = norm(static_cast<double>(sums.wins));
        ad.norms.clicks = norm(static_cast<double>(sums.clicks));
        ad.norms.purchases = norm(static_cast<double>(sums.purchases));
        ad.norms.cost = norm(sums.cost);
        ad.norms.pur_amt = norm(sums.pur_amt);
        ad.norms.ppc =
            sums.clicks > 0 ? std::max(sums.cost / sums.clicks, 1e-6) : 1.0;
        ad.norms.slot_count = cfg_.profile.slot_count;
        ad.norms.budget = ad.kb_mean_cost;

        if (ac.alpha_ref_given) {
            ad.alpha_ref = ac.ad.alpha_ref;
        } else {
            // Bisection: find alpha whose mean daily spend matches KB's.
            auto spend = [&](double alpha) {
                std::vector<double> costs;
                for (int d = 0; d < cfg_.alpha_calibration_days; ++d) {
                    LinearBidPolicy lin(alpha);
                    Rng rng = substream(cfg_.seed, "alpha-calib-" + ad.ad.id, d);
                    EpisodeResult res = run_episode(days[d], ad.ad.id, lin,
                                                    kUnlimitedBudget, rng, cfg_.profile);
                    costs.push_back(res.totals.cost);
                }
                return mean_of(costs);
            };
            double lo = std::log(1e-3), hi = std::log(1e5);
            double alpha = 1.0;
            for (int it = 0; it < 48; ++it) {
                double mid = 0.5 * (lo + hi);
                alpha = std::exp(mid);
                double c = spend(alpha);
                if (std::abs(c - ad.kb_mean_cost) / ad.kb_mean_cost < 0.02) break;
                if (c < ad.kb_mean_cost)
                    lo = mid;
                else
                    hi = mid;
            }
            ad.alpha_ref = alpha;
        }
        ad.norms.alpha_max = 10.0 * ad.alpha_ref;
        ad.norms.validate();
        derived_[ad.ad.id] = std::move(ad);
    }
}

const AdDerived& Lab::derived(const std::string& ad_id) const {
    derive_all();
    auto it = derived_.find(ad_id);
    if (it == derived_.end()) throw ContractError("unknown ad id: " + ad_id);
    return it->second;
}

double Lab::kb_cost_on(const AuctionLog& log, const AdDerived& ad,
                       std::uint64_t stream_tag) const {
    KbPolicy kb(ad.presets);
    Rng rng = substream(cfg_.seed, "kbcost-" + ad.ad.id, stream_tag);
    return run_episode(log, ad.ad.id, kb, ad.ad.daily_budget, rng, cfg_.profile)
        .totals.cost;
}

double Lab::amdp_price_ref(const AdDerived& ad) const {
    if (cfg_.amdp_price_ref > 0.0) return cfg_.amdp_price_ref;
    // Same calibrated alpha scale as the hour-level learner, so the two
    // action grids explore bids of comparable aggressiveness.
    return ad.alpha_ref;
}

TrainResult Lab::train_rmdp_ad(const AdDerived& ad, double budget_c) const {
    TrainerConfig tc = cfg_.trainer;
    tc.reward_scale = 1.0 / budget_c;
    tc.steps_per_episode_hint = kEpisodeSteps;
    FeatureNorms norms = ad.norms;
    norms.budget = budget_c;
    ActionGrid grid{ad.alpha_ref};
    const AuctionLog* log = &train_day();
    const DayProfile* profile = &cfg_.profile;
    std::string ad_id = ad.ad.id;
    std::uint64_t seed = cfg_.seed;
    DqnTrainer trainer(tc, substream_seed(seed, "rmdp-" + ad_id));
    return trainer.train([=](int episode) -> std::unique_ptr<Env> {
        return std::make_unique<BidEnv>(log, ad_id, budget_c, grid, profile, norms,
                                        substream_seed(seed, "rmdp-ep-" + ad_id, episode));
    });
}

TrainResult Lab::train_amdp_ad(const AdDerived& ad, double budget_c) const {
    TrainerConfig tc = cfg_.trainer;
    tc.reward_scale = 1.0 / budget_c;
    FeatureNorms norms = ad.norms;
    norms.budget = budget_c;
    double price_ref = amdp_price_ref(ad);
    const AuctionLog* log = &train_day();
    const DayProfile* profile = &cfg_.profile;
    std::string ad_id = ad.ad.id;
    std::uint64_t seed = cfg_.seed;
    int block = cfg_.amdp_block_size;
    {
        AmdpEnv probe(log, ad_id, budget_c, price_ref, profile, norms, 0, block);
        tc.steps_per_episode_hint = std::max<int>(
            1, static_cast<int>((probe.participated_total() + block - 1) / block));
    }
    // The configured gamma is per hour (the hour-aggregated episode has 24
    // steps). A block spans 24/steps hours, so discount per block step by
    // gamma^(24/steps) to keep the per-day discounting comparable across the
    // two formulations.
    if (cfg_.amdp_gamma > 0.0) tc.gamma = cfg_.amdp_gamma;
    if (tc.gamma < 1.0)
        tc.gamma = std::pow(tc.gamma, 24.0 / tc.steps_per_episode_hint);
    DqnTrainer trainer(tc, substream_seed(seed, "amdp-" + ad_id));
    return trainer.train([=](int episode) -> std::unique_ptr<Env> {
        return std::make_unique<AmdpEnv>(log, ad_id, budget_c, price_ref, profile, norms,
                                         substream_seed(seed, "amdp-ep-" + ad_id, episode),
                                         block);
    });
}

MassiveResult Lab::train_market(double lambda) const {
    derive_all();
    if (cfg_.ads.size() < 2)
        throw ContractError("train_market: needs at least 2 agents");
    const AuctionLog& log = train_day();

    // Equal-cost budgets from an all-KB shared-market run on the train day.
    std::vector<std::unique_ptr<KbPolicy>> kb_policies;
    std::vector<AgentRun> kb_runs;
    for (const auto& ac : cfg_.ads) {
        const AdDerived& ad = derived(ac.ad.id);
        kb_policies.push_back(std::make_unique<KbPolicy>(ad.presets));
        kb_runs.push_back({ad.ad.id, kb_policies.back().get(), ad.ad.daily_budget});
    }
    Rng kb_rng = substream(cfg_.seed, "market-kb-cost");
    auto kb_results = run_market_episode(log, kb_runs, kb_rng, cfg_.profile);

    std::vector<AgentSetup> setups;
    for (std::size_t i = 0; i < cfg_.ads.size(); ++i) {
        const AdDerived& ad = derived(cfg_.ads[i].ad.id);
        double c = kb_results[i].totals.cost;
        if (!(c > 0.0))
            throw ConfigError("train_market: KB cost is zero for ad " + ad.ad.id);
        AgentSetup s;
        s.ad_id = ad.ad.id;
        s.budget = c;
        s.grid = ActionGrid{ad.alpha_ref};
        s.norms = ad.norms;
        s.norms.budget = c;
        s.trainer = cfg_.trainer;
        s.trainer.reward_scale = 1.0 / c;
        s.trainer.steps_per_episode_hint = kEpisodeSteps;
        setups.push_back(std::move(s));
    }
    std::uint64_t lambda_tag = static_cast<std::uint64_t>(std::lround(lambda * 1000.0));
    return train_massive(
        setups, [&log](int) -> const AuctionLog& { return log; }, cfg_.profile, lambda,
        cfg_.trainer.episodes, substream_seed(cfg_.seed, "massive", lambda_tag));
}

EvalRow Lab::eval_policy_on_day(const std::string& algo, const std::string& split,
                                const AdDerived& ad, BidPolicy& policy,
                                const AuctionLog& log, std::uint64_t stream_tag) const {
    KbPolicy kb(ad.presets);
    Rng kb_rng = substream(cfg_.seed, "kbcost-" + ad.ad.id, stream_tag);
    EpisodeResult kb_res =
        run_episode(log, ad.ad.id, kb, ad.ad.daily_budget, kb_rng, cfg_.profile);
    double c = kb_res.totals.cost;

    EpisodeResult res;
    if (algo == "kb") {
        res = kb_res;
    } else {
        if (!(c > 0.0)) throw ConfigError("eval: KB cost is zero on ad " + ad.ad.id);
        Rng rng = substream(cfg_.seed, "eval-" + algo + "-" + ad.ad.id, stream_tag);
        res = run_episode(log, ad.ad.id, policy, c, rng, cfg_.profile);
    }

    EvalRow row;
    row.ad_id = ad.ad.id;
    row.algo = algo;
    row.split = split;
    row.cost = res.totals.cost;
    row.pur_amt = res.totals.pur_amt;
    row.pur_amt_per_cost = res.totals.cost > 0.0 ? res.totals.pur_amt / res.totals.cost : 0.0;
    row.cvr = res.totals.cvr;
    row.ppc = res.totals.ppc;
    row.roi = row.pur_amt_per_cost;
    row.zero_clicks = res.totals.clicks == 0;
    row.cost_ratio_vs_kb = c > 0.0 ? res.totals.cost / c : 0.0;
    row.cost_ok = std::abs(row.cost_ratio_vs_kb - 1.0) <= cfg_.equal_cost_tolerance;
    double kb_metric = c > 0.0 ? kb_res.totals.pur_amt / c : 0.0;
    row.improvement_vs_kb =
        kb_metric > 0.0 ? (row.pur_amt_per_cost - kb_metric) / kb_metric : 0.0;
    return row;
}

std::vector<EvalRow> Lab::market_eval_rows(const std::string& algo,
                                           const std::string& split,
                                           const std::vector<QNetwork>* nets,
                                           const AuctionLog& log,
                                           std::uint64_t stream_tag) const {
    derive_all();
    std::vector<std::unique_ptr<KbPolicy>> kb_policies;
    std::vector<AgentRun> kb_runs;
    for (const auto& ac : cfg_.ads) {
        const AdDerived& ad = derived(ac.ad.id);
        kb_policies.push_back(std::make_unique<KbPolicy>(ad.presets));
        kb_runs.push_back({ad.ad.id, kb_policies.back().get(), ad.ad.daily_budget});
    }
    Rng kb_rng = substream(cfg_.seed, "market-kbcost", stream_tag);
    auto kb_results = run_market_episode(log, kb_runs, kb_rng, cfg_.profile);

    std::vector<EpisodeResult> results;
    if (!nets) {
        results = kb_results;
    } else {
        if (nets->size() != cfg_.ads.size())
            throw ContractError("market_eval_rows: one net per ad required");
        std::vector<std::unique_ptr<HourlyAlphaPolicy>> policies;
        std::vector<AgentRun> runs;
        for (std::size_t i = 0; i < cfg_.ads.size(); ++i) {
            const AdDerived& ad = derived(cfg_.ads[i].ad.id);
            double c = kb_results[i].totals.cost;
            if (!(c > 0.0))
                throw ConfigError("market eval: KB cost is zero for ad " + ad.ad.id);
            FeatureNorms norms = ad.norms;
            norms.budget = c;
            policies.push_back(std::make_unique<HourlyAlphaPolicy>(
                &(*nets)[i], ActionGrid{ad.alpha_ref}, norms));
            runs.push_back({ad.ad.id, policies.back().get(), c});
        }
        Rng rng = substream(cfg_.seed, "market-eval-" + algo, stream_tag);
        results = run_market_episode(log, runs, rng, cfg_.profile);
    }

    std::vector<EvalRow> rows;
    for (std::size_t i = 0; i < cfg_.ads.size(); ++i) {
        const EpisodeResult& res = results[i];
        double c = kb_results[i].totals.cost;
        EvalRow row;
        row.ad_id = cfg_.ads[i].ad.id;
        row.algo = algo;
        row.split = split;
        row.cost = res.totals.cost;
        row.pur_amt = res.totals.pur_amt;
        row.pur_amt_per_cost =
            res.totals.cost > 0.0 ? res.totals.pur_amt / res.totals.cost : 0.0;
        row.cvr = res.totals.cvr;
        row.ppc = res.totals.ppc;
        row.roi = row.pur_amt_per_cost;
        row.zero_clicks = res.totals.clicks == 0;
        row.cost_ratio_vs_kb = c > 0.0 ? res.totals.cost / c : 0.0;
        row.cost_ok = std::abs(row.cost_ratio_vs_kb - 1.0) <= cfg_.equal_cost_tolerance;
        double kb_metric = c > 0.0 ? kb_results[i].totals.pur_amt / c : 0.0;
        row.improvement_vs_kb =
            kb_metric > 0.0 ? (row.pur_amt_per_cost - kb_metric) / kb_metric : 0.0;
        rows.push_back(row);
    }
    return rows;
}

void Lab::simulate(const std::string& out_dir) const {
    ensure_dir(out_dir);
    write_auction_log_jsonl(train_day(), out_dir + "/train_day.jsonl");
    for (int d = 0; d < cfg_.test_days; ++d)
        write_auction_log_jsonl(test_day(d),
                                out_dir + "/test_day_" + std::to_string(d) + ".jsonl");
}

namespace {
json norms_to_json(const FeatureNorms& n) {
    return {{"impressions", n.impressions}, {"wins", n.wins},
            {"clicks", n.clicks},           {"purchases", n.purchases},
            {"cost", n.cost},               {"pur_amt", n.pur_amt},
            {"ppc", n.ppc},                 {"budget", n.budget},
            {"alpha_max", n.alpha_max},     {"slot_count", n.slot_count}};
}

FeatureNorms norms_from_json(const json& j) {
    FeatureNorms n;
    n.impressions = j.at("impressions").get<double>();
    n.wins = j.at("wins").get<double>();
    n.clicks = j.at("clicks").get<double>();
    n.purchases = j.at("purchases").get<double>();
    n.cost = j.at("cost").get<double>();
    n.pur_amt = j.at("pur_amt").get<double>();
    n.ppc = j.at("ppc").get<double>();
    n.budget = j.at("budget").get<double>();
    n.alpha_max = j.at("alpha_max").get<double>();
    n.slot_count = j.at("slot_count").get<int>();
    return n;
}

void write_meta(const std::string& ckpt_path, const std::string& algo,
                const AdDerived& ad, double budget_c, double price_ref, int block_size) {
    json meta = {{"algo", algo},
                 {"ad_id", ad.ad.id},
                 {"alpha_ref", ad.alpha_ref},
                 {"budget_c", budget_c},
                 {"price_ref", price_ref},
                 {"block_size", block_size},
                 {"norms", norms_to_json(ad.norms)}};
    auto os = open_out(ckpt_path + ".meta.json");
    os << meta.dump(2) << '\n';
}
} // namespace

std::vector<ConvergenceSummary> Lab::train(const std::string& algo,
                                           const std::string& out_dir) const {
    ensure_dir(out_dir);
    derive_all();
    std::vector<ConvergenceSummary> summaries;
    if (algo == "rmdp" || algo == "amdp") {
        for (const auto& ac : cfg_.ads) {
            const AdDerived& ad = derived(ac.ad.id);
            double c = kb_cost_on(train_day(), ad, 1000);
            if (!(c > 0.0))
                throw ConfigError("train: KB cost is zero on the train day for ad " +
                                  ad.ad.id);
            TrainResult result = algo == "rmdp" ? train_rmdp_ad(ad, c)
                                                : train_amdp_ad(ad, c);
            std::string base = algo + "_" + ad.ad.id;
            save_checkpoint(out_dir + "/" + base + ".ckpt", result.net, result.opt);
            write_meta(out_dir + "/" + base + ".ckpt", algo, ad, c,
                       algo == "amdp" ? amdp_price_ref(ad) : 0.0, cfg_.amdp_block_size);
            write_train_log_csv(result.log, out_dir + "/" + base + "_log.csv");
            summaries.push_back(emit_convergence(result.log, out_dir, base));
        }
    } else if (algo == "m-rmdp") {
        MassiveResult result = train_market(cfg_.lambda);
        for (std::size_t i = 0; i < cfg_.ads.size(); ++i) {
            const AdDerived& ad = derived(cfg_.ads[i].ad.id);
            std::string base = "m-rmdp_" + ad.ad.id;
            save_checkpoint(out_dir + "/" + base + ".ckpt", result.nets[i],
                            result.opts[i]);
            write_meta(out_dir + "/" + base + ".ckpt", "m-rmdp", ad, ad.kb_mean_cost,
                       0.0, cfg_.amdp_block_size);
            write_train_log_csv(result.logs[i], out_dir + "/" + base + "_log.csv");
            summaries.push_back(emit_convergence(result.logs[i], out_dir, base));
        }
        write_global_log_csv(result.global_log, out_dir + "/m-rmdp_global_log.csv");
    } else {
        throw ContractError("train: unknown algorithm " + algo +
                            " (expected rmdp, amdp or m-rmdp)");
    }
    return summaries;
}

CompareReport Lab::eval_checkpoint(const std::string& checkpoint_path,
                                   const std::string& out_dir) const {
    ensure_dir(out_dir);
    std::ifstream meta_is(checkpoint_path + ".meta.json");
    if (!meta_is)
        throw IoError("eval: missing checkpoint metadata " + checkpoint_path +
                      ".meta.json");
    json meta;
    try {
        meta_is >> meta;
    } catch (const json::exception& e) {
        throw IoError(std::string("eval: bad checkpoint metadata: ") + e.what());
    }
    std::string algo = meta.at("algo").get<std::string>();
    std::string ad_id = meta.at("ad_id").get<std::string>();
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const AdDerived& ad = derived(ad_id);
    FeatureNorms norms = norms_from_json(meta.at("norms"));

    CompareReport report;
    for (int d = 0; d < cfg_.test_days; ++d) {
        AuctionLog log = test_day(d);
        std::uint64_t tag = 2000 + static_cast<std::uint64_t>(d);
        KbPolicy kb(ad.presets);
        report.rows.push_back(eval_policy_on_day("kb", "test", ad, kb, log, tag));
        std::unique_ptr<BidPolicy> policy;
        if (algo == "amdp") {
            AmdpEnv probe(&log, ad_id, 1.0, meta.at("price_ref").get<double>(),
                          &cfg_.profile, norms, 0, meta.at("block_size").get<int>());
            policy = std::make_unique<AmdpPolicy>(
                &ckpt.net, meta.at("price_ref").get<double>(), norms,
                probe.participated_total(), meta.at("block_size").get<int>());
        } else {
            policy = std::make_unique<HourlyAlphaPolicy>(
                &ckpt.net, ActionGrid{meta.at("alpha_ref").get<double>()}, norms);
        }
        report.rows.push_back(eval_policy_on_day(algo, "test", ad, *policy, log, tag));
        report.all_cost_ok = report.all_cost_ok && report.rows.back().cost_ok;
    }
    write_eval_csv(report.rows, out_dir + "/eval.csv");
    return report;
}

namespace {
EvalRow average_rows(const std::vector<EvalRow>& rows, const std::string& ad_id,
                     const std::string& algo, const std::string& split) {
    EvalRow avg;
    avg.ad_id = ad_id;
    avg.algo = algo;
    avg.split = split;
    if (rows.empty()) return avg;
    for (const auto& r : rows) {
        avg.cost += r.cost;
        avg.pur_amt += r.pur_amt;
        avg.pur_amt_per_cost += r.pur_amt_per_cost;
        avg.cvr += r.cvr;
        avg.ppc += r.ppc;
        avg.cost_ratio_vs_kb += r.cost_ratio_vs_kb;
        avg.cost_ok = avg.cost_ok && r.cost_ok;
        avg.zero_clicks = avg.zero_clicks || r.zero_clicks;
    }
    double n = static_cast<double>(rows.size());
    avg.cost /= n;
    avg.pur_amt /= n;
    avg.pur_amt_per_cost /= n;
    avg.cvr /= n;
    avg.ppc /= n;
    avg.cost_ratio_vs_kb /= n;
    avg.roi = avg.pur_amt_per_cost;
    return avg;
}

void finish_improvements(std::vector<EvalRow>& rows) {
    // Improvement of the averaged metric against the same-ad same-split KB row.
    for (auto& row : rows) {
        if (row.algo == "kb" || row.algo == "kb-market") {
            row.improvement_vs_kb = 0.0;
            continue;
        }
        std::string kb_name = row.algo.find("market") != std::string::npos ||
                                      row.algo == "m-rmdp" || row.algo == "rmdp-market"
                                  ? "kb-market"
                                  : "kb";
        for (const auto& kb : rows) {
            if (kb.ad_id == row.ad_id && kb.split == row.split && kb.algo == kb_name) {
                row.improvement_vs_kb =
                    kb.pur_amt_per_cost > 0.0
                        ? (row.pur_amt_per_cost - kb.pur_amt_per_cost) /
                              kb.pur_amt_per_cost
                        : 0.0;
                break;
            }
        }
    }
}
} // namespace

CompareReport Lab::compare(const std::string& out_dir) const {
    ensure_dir(out_dir);
    derive_all();
    const AuctionLog& train_log = train_day();
    std::vector<AuctionLog> test_logs;
    for (int d = 0; d < cfg_.test_days; ++d) test_logs.push_back(test_day(d));

    CompareReport report;
    std::map<std::pair<std::string, std::string>, std::vector<EvalRow>> grouped;

    // Single-agent part: KB, AMDP, RMDP per ad.
    for (const auto& ac : cfg_.ads) {
        const AdDerived& ad = derived(ac.ad.id);
        double c_train = kb_cost_on(train_log, ad, 1000);
        TrainResult rmdp = train_rmdp_ad(ad, c_train);
        TrainResult amdp = train_amdp_ad(ad, c_train);
        FeatureNorms norms = ad.norms;
        norms.budget = c_train;
        double price_ref = amdp_price_ref(ad);

        auto eval_on = [&](const AuctionLog& log, const std::string& split,
                           std::uint64_t tag) {
            KbPolicy kb(ad.presets);
            grouped[{"kb", split}].push_back(
                eval_policy_on_day("kb", split, ad, kb, log, tag));
            HourlyAlphaPolicy rp(&rmdp.net, ActionGrid{ad.alpha_ref}, norms);
            grouped[{"rmdp", split}].push_back(
                eval_policy_on_day("rmdp", split, ad, rp, log, tag));
            AmdpEnv probe(&log, ad.ad.id, 1.0, price_ref, &cfg_.profile, norms, 0,
                          cfg_.amdp_block_size);
            AmdpPolicy ap(&amdp.net, price_ref, norms, probe.participated_total(),
                          cfg_.amdp_block_size);
            grouped[{"amdp", split}].push_back(
                eval_policy_on_day("amdp", split, ad, ap, log, tag));
        };
        eval_on(train_log, "train", 1000);
        for (int d = 0; d < cfg_.test_days; ++d)
            eval_on(test_logs[d], "test", 2000 + static_cast<std::uint64_t>(d));
    }

    // Shared-market part: KB vs independently-competing RMDP vs M-RMDP.
    if (cfg_.ads.size() >= 2) {
        MassiveResult rmdp_market = train_market(0.0);
        MassiveResult m_rmdp = train_market(cfg_.lambda);
        for (int d = 0; d < cfg_.test_days; ++d) {
            std::uint64_t tag = 2000 + static_cast<std::uint64_t>(d);
            for (auto& row :
                 market_eval_rows("kb-market", "test", nullptr, test_logs[d], tag))
                grouped[{"kb-market", "test"}].push_back(row);
            for (auto& row : market_eval_rows("rmdp-market", "test", &rmdp_market.nets,
                                              test_logs[d], tag))
                grouped[{"rmdp-market", "test"}].push_back(row);
            for (auto& row :
                 market_eval_rows("m-rmdp", "test", &m_rmdp.nets, test_logs[d], tag))
                grouped[{"m-rmdp", "test"}].push_back(row);
        }
    }

    // Per-ad averages over days plus an all-ad average row per algo/split.
    for (auto& [key, rows] : grouped) {
        const auto& [algo, split] = key;
        std::map<std::string, std::vector<EvalRow>> by_ad;
        for (const auto& r : rows) by_ad[r.ad_id].push_back(r);
        for (const auto& [ad_id, ad_rows] : by_ad)
            report.rows.push_back(average_rows(ad_rows, ad_id, algo, split));
        report.rows.push_back(average_rows(rows, "avg", algo, split));
    }
    finish_improvements(report.rows);
    for (const auto& row : report.rows)
        report.all_cost_ok = report.all_cost_ok && row.cost_ok;
    write_compare_csv(report, out_dir + "/comparison.csv");
    return report;
}

ConsistencySummary Lab::consistency(const std::string& out_dir) const {
    ensure_dir(out_dir);
    const ConsistencyConfig& cc = cfg_.consistency;

    // Dedicated probe market: flat-ish diurnal shape at consistency traffic
    // scale, high response rates, no day-specific competition jitter.
    DayProfile profile = cfg_.profile;
    profile.competition_day_jitter = 0.0;
    double wsum = 0.0;
    std::array<double, 24> w{};
    for (int h = 0; h < 24; ++h) {
        w[h] = (h >= 3 && h <= 7) ? 0.85 : (h == 9 ? 1.0 : 0.92);
        wsum += w[h];
    }
    for (int h = 0; h < 24; ++h) {
        profile.hourly_intensity[h] = cc.auctions_per_day * w[h] / wsum;
        profile.hourly_cvr_multiplier[h] = 1.0;
    }

    Ad probe;
    probe.id = "probe";
    probe.daily_budget = kUnlimitedBudget;
    probe.keyword_tuples.push_back({"probe", "kw", 1.0});
    AdMarketModel model;
    model.pcvr_beta_a = cc.probe_beta_a;
    model.pcvr_beta_b = cc.probe_beta_b;
    model.ctr_base = cc.probe_ctr_base;

    auto day_aggregates = [&](std::uint64_t day_index) {
        AuctionLog log = generate_day(substream_seed(cfg_.seed, "consistency", day_index),
                                      profile, {probe}, {{"probe", model}});
        LinearBidPolicy lin(cc.probe_alpha); // the fixed action sequence
        Rng rng = substream(cfg_.seed, "consistency-resp", day_index);
        EpisodeResult res =
            run_episode(log, "probe", lin, kUnlimitedBudget, rng, profile);
        return res.steps;
    };

    ConsistencySummary summary;
    summary.pairs = cc.pairs;
    summary.eta_bound_at_003 = eta_bound(0.03);
    summary.chain_ok = true;
    long passed = 0, counted = 0;

    auto os = open_out(out_dir + "/consistency.csv");
    os << "pair,feature,step,eta_hat,pass\n";
    for (int p = 0; p < cc.pairs; ++p) {
        auto a = day_aggregates(2 * static_cast<std::uint64_t>(p));
        auto b = day_aggregates(2 * static_cast<std::uint64_t>(p) + 1);
        ConsistencyReport report = consistency_check(a, b);
        for (const auto& cell : report.cells) {
            ++summary.cells;
            if (cell.excluded) {
                ++summary.excluded;
                os << p << ',' << kConsistencyFeatureNames[cell.feature] << ','
                   << cell.step << ",,excluded\n";
                continue;
            }
            ++counted;
            if (cell.pass) {
                ++passed;
                // Observation -> band bound -> substitution threshold.
                if (!(eta_bound(cell.eta_hat) < 0.01)) summary.chain_ok = false;
            }
            summary.max_eta = std::max(summary.max_eta, cell.eta_hat);
            os << p << ',' << kConsistencyFeatureNames[cell.feature] << ',' << cell.step
               << ',' << cell.eta_hat << ',' << (cell.pass ? 1 : 0) << '\n';
        }
    }
    summary.pass_fraction =
        counted > 0 ? static_cast<double>(passed) / static_cast<double>(counted) : 0.0;

    json sj = {{"pairs", summary.pairs},
               {"cells", summary.cells},
               {"excluded", summary.excluded},
               {"pass_fraction", summary.pass_fraction},
               {"max_eta", summary.max_eta},
               {"eta_bound_at_0.03", summary.eta_bound_at_003},
               {"chain_ok", summary.chain_ok}};
    auto sjos = open_out(out_dir + "/consistency_summary.json");
    sjos << sj.dump(2) << '\n';
    return summary;
}

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path) {
    auto os = open_out(path);
    os << "ad_id,algo,split,cost,pur_amt,pur_amt_per_cost,cvr,roi,ppc,"
          "cost_ratio_vs_kb,improvement_vs_kb,cost_ok,zero_clicks\n";
    for (const auto& r : rows) {
        os << r.ad_id << ',' << r.algo << ',' << r.split << ',' << r.cost << ','
           << r.pur_amt << ',' << r.pur_amt_per_cost << ',' << r.cvr << ',' << r.roi
           << ',' << r.ppc << ',' << r.cost_ratio_vs_kb << ',' << r.improvement_vs_kb
           << ',' << (r.cost_ok ? 1 : 0) << ',' << (r.zero_clicks ? 1 : 0) << '\n';
    }
}

void write_compare_csv(const CompareReport& report, const std::string& path) {
    write_eval_csv(report.rows, path);
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    auto os = open_out(path);
    os << "batch,loss,episode\n";
    for (const auto& row : log.rows)
        os << row.batch << ',' << row.loss << ',' << row.episode << '\n';
}

void write_global_log_csv(const std::vector<GlobalLogRow>& rows,
                          const std::string& path) {
    auto os = open_out(path);
    os << "episode,ad_id,cost,pur_amt,mixed_reward\n";
    for (const auto& r : rows)
        os << r.episode << ',' << r.ad_id << ',' << r.cost << ',' << r.pur_amt << ','
           << r.mixed_reward << '\n';
}

} // namespace ssrtb
