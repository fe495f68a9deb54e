#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "choicectx/dataset.hpp"
#include "choicectx/em.hpp"
#include "choicectx/identify.hpp"
#include "choicectx/model.hpp"
#include "choicectx/network.hpp"
#include "choicectx/optimize.hpp"
#include "choicectx/standardize.hpp"
#include "choicectx/stats.hpp"

namespace choicectx::cli {

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

json make_report(const std::string& schema, const std::vector<std::string>& args,
                 std::uint64_t seed, double elapsed_s, json payload) {
    json report;
    report["schema"] = {{"name", "choicectx." + schema}, {"version", 1}};
    report["tool_version"] = kToolVersion;
    report["invocation"] = args;
    report["seed"] = seed;
    report["timing_seconds"] = elapsed_s;
    report["payload"] = std::move(payload);
    return report;
}

// Atomic when writing to a file: temp file in the same directory, then
// rename over the target.
void write_report(const json& report, const std::string& out_path, std::ostream& fallback) {
    const std::string text = report.dump(2) + "\n";
    if (out_path.empty()) {
        fallback << text;
        return;
    }
    namespace fs = std::filesystem;
    if (fs::is_directory(out_path))
        throw DataError("--out points to a directory: " + out_path);
    const std::string tmp = out_path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write: " + out_path);
        out << text;
        if (!out) throw DataError("write failed: " + out_path);
    }
    fs::rename(tmp, out_path);
}

json to_json(const Model& m) { return json::parse(model_to_json(m)); }

json split_json(const DatasetSplit& split) { return json::parse(split_manifest_json(split)); }

json log_json(const std::vector<TrainLogEntry>& log) {
    json out = json::array();
    for (const auto& e : log) {
        json j = {{"epoch", e.epoch}, {"train_nll", e.train_nll}, {"elapsed_s", e.elapsed_s}};
        if (e.val_nll) j["val_nll"] = *e.val_nll;
        out.push_back(std::move(j));
    }
    return out;
}

struct CommonOpts {
    std::string data, out;
    std::uint64_t seed = 0;
    double lr = 0.01, wd = 0.001;
    int epochs = 500, batch = 128;
    std::string split = "random";
    std::string standardize = "train";
};

void add_optimizer_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--lr", o.lr, "Adam learning rate");
    cmd->add_option("--wd", o.wd, "weight decay");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--batch", o.batch, "minibatch size");
}

void add_standardize_flag(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--standardize", o.standardize, "feature standardization")
        ->check(CLI::IsMember({"train", "all", "off"}));
}

TrainConfig train_config(const CommonOpts& o) {
    TrainConfig c;
    c.learning_rate = o.lr;
    c.weight_decay = o.wd;
    c.epochs = o.epochs;
    c.batch_size = o.batch;
    c.seed = o.seed;
    return c;
}

SplitMode split_mode(const std::string& name) {
    return name == "temporal" ? SplitMode::temporal : SplitMode::random;
}

// Standardizes the split in place per --standardize and returns the
// fitted transform (nullopt for "off").
std::optional<Standardizer> standardize_split(DatasetSplit& split, const ChoiceDataset& full,
                                              const std::string& mode) {
    if (mode == "off") return std::nullopt;
    Standardizer s =
        mode == "all" ? fit_standardizer(full) : fit_standardizer(split.train);
    split.train = apply_standardizer(s, split.train);
    split.validation = apply_standardizer(s, split.validation);
    split.test = apply_standardizer(s, split.test);
    return s;
}

ChoiceDataset standardized_for(const Model& m, const ChoiceDataset& data) {
    return m.standardizer ? apply_standardizer(*m.standardizer, data) : data;
}

double mean_nll(const Model& m, const ChoiceDataset& data) {
    return data.empty() ? 0.0 : negative_log_likelihood(m, data) / data.size();
}

json cmd_fit(const CommonOpts& o, const std::string& model_name) {
    const ModelKind kind = kind_from_name(model_name);
    auto loaded = load_dataset(o.data);
    DatasetSplit split =
        split_dataset(loaded.dataset, split_mode(o.split), SplitFractions{}, o.seed);
    auto standardizer = standardize_split(split, loaded.dataset, o.standardize);

    FitOptions options;
    options.validation = split.validation.empty() ? nullptr : &split.validation;
    FitResult fit = fit_mle(kind, split.train, train_config(o), options);
    if (standardizer) fit.model.standardizer = standardizer;

    json payload;
    payload["model"] = to_json(fit.model);
    payload["split"] = split_json(split);
    payload["dropped_singletons"] = loaded.dropped_singletons;
    payload["training_log"] = log_json(fit.log);
    payload["stop_reason"] =
        fit.stop_reason == StopReason::wall_clock ? "wall_clock" : "epochs_exhausted";
    payload["final"] = {{"train_nll", negative_log_likelihood(fit.model, split.train)},
                        {"train_nll_per_obs", mean_nll(fit.model, split.train)},
                        {"val_nll_per_obs", mean_nll(fit.model, split.validation)},
                        {"test_nll_per_obs", mean_nll(fit.model, split.test)}};
    return payload;
}

json cmd_eval(const CommonOpts& o, const std::string& params, const std::string& part) {
    const Model model = load_model(params);
    auto loaded = load_dataset(o.data);
    ChoiceDataset subset = loaded.dataset;
    if (part != "all") {
        DatasetSplit split =
            split_dataset(loaded.dataset, split_mode(o.split), SplitFractions{}, o.seed);
        subset = part == "train" ? split.train
                 : part == "val" ? split.validation
                                 : split.test;
    }
    const ChoiceDataset data = standardized_for(model, subset);
    RelativeRankResult rank = mean_relative_rank(model, data);

    json payload;
    payload["part"] = part;
    payload["n"] = data.size();
    payload["nll"] = negative_log_likelihood(model, data);
    payload["nll_per_obs"] = mean_nll(model, data);
    payload["mean_relative_rank"] = rank.mean;
    payload["relative_ranks"] = rank.per_observation;
    return payload;
}

json lrt_json(const LRTResult& r) {
    return {{"statistic", r.statistic}, {"dof", r.dof}, {"p_value", r.p_value}};
}

json cmd_lrt(const CommonOpts& o, const std::string& null_path, const std::string& full_path,
             bool wilcoxon) {
    if (wilcoxon) {
        // Compare two eval reports by their per-observation relative ranks.
        auto ranks = [](const std::string& path) {
            std::ifstream in(path);
            if (!in) throw DataError("cannot open eval report: " + path);
            json j = json::parse(in);
            return j.at("payload").at("relative_ranks").get<std::vector<double>>();
        };
        auto a = ranks(null_path);
        auto b = ranks(full_path);
        if (a.size() != b.size())
            throw DataError("rank vectors differ in length; evals must share a split");
        std::vector<double> diffs(a.size());
        for (size_t i = 0; i < a.size(); ++i) diffs[i] = a[i] - b[i];
        WilcoxonResult w = wilcoxon_signed_rank(diffs);
        return {{"mode", "wilcoxon"},
                {"T", w.T},
                {"n_effective", w.n_effective},
                {"p_value", w.p_value},
                {"method", w.method}};
    }
    const Model null_model = load_model(null_path);
    const Model full_model = load_model(full_path);
    auto loaded = load_dataset(o.data);
    const double nll_null =
        negative_log_likelihood(null_model, standardized_for(null_model, loaded.dataset));
    const double nll_full =
        negative_log_likelihood(full_model, standardized_for(full_model, loaded.dataset));
    const int dof = full_model.n_params() - null_model.n_params();
    LRTResult r = likelihood_ratio_test(nll_null, nll_full, dof);
    json payload = lrt_json(r);
    payload["mode"] = "chi2";
    payload["nll_null"] = nll_null;
    payload["nll_full"] = nll_full;
    return payload;
}

json cmd_constrained_lrt(const CommonOpts& o, const std::string& entry) {
    int p = -1, q = -1;
    if (std::sscanf(entry.c_str(), "%d,%d", &p, &q) != 2)
        throw CLI::ValidationError("--entry", "expected p,q");
    auto loaded = load_dataset(o.data);
    ChoiceDataset data = loaded.dataset;
    std::optional<Standardizer> s;
    if (o.standardize != "off") {
        s = fit_standardizer(data);
        data = apply_standardizer(*s, data);
    }
    if (p < 0 || q < 0 || p >= data.d || q >= data.d)
        throw DataError("--entry out of range for d = " + std::to_string(data.d));

    const TrainConfig config = train_config(o);
    FitResult null_fit = fit_mle(ModelKind::mnl, data, config);
    ConstrainedLclResult full_fit = fit_constrained_lcl(data, p, q, config);
    const double nll_null = negative_log_likelihood(null_fit.model, data);
    LRTResult r = likelihood_ratio_test(nll_null, full_fit.nll, 1);
    if (s) {
        null_fit.model.standardizer = s;
        full_fit.model.standardizer = s;
    }

    json payload = lrt_json(r);
    payload["entry"] = {p, q};
    payload["nll_null"] = nll_null;
    payload["nll_full"] = full_fit.nll;
    payload["a_pq"] = full_fit.model.A(p, q);
    payload["null_model"] = to_json(null_fit.model);
    payload["full_model"] = to_json(full_fit.model);
    return payload;
}

json cmd_identify(const CommonOpts& o) {
    auto loaded = load_dataset(o.data);
    IdentifyOptions opts;
    opts.subsample_seed = o.seed;
    IdentifiabilityReport report = lcl_identifiable(loaded.dataset, opts);
    return json::parse(identifiability_report_json(report));
}

json cmd_l1path(const CommonOpts& o, const std::string& lambdas_csv) {
    RegPathConfig config;
    config.base = train_config(o);
    std::istringstream ss(lambdas_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) config.lambdas.push_back(std::stod(tok));

    auto loaded = load_dataset(o.data);
    ChoiceDataset data = loaded.dataset;
    std::optional<Standardizer> s;
    if (o.standardize != "off") {
        s = fit_standardizer(data);
        data = apply_standardizer(*s, data);
    }
    RegPathResult path = l1_path(data, config);

    json payload;
    payload["mnl_nll"] = path.mnl_nll;
    json entries = json::array();
    for (auto& e : path.entries) {
        if (s) e.model.standardizer = s;
        entries.push_back({{"lambda", e.lambda},
                           {"nll", e.nll},
                           {"nnz_A", e.nnz_A},
                           {"lrt_statistic", e.lrt_statistic},
                           {"lrt_vs_mnl_p", e.lrt_vs_mnl_p},
                           {"model", to_json(e.model)}});
    }
    payload["entries"] = std::move(entries);
    return payload;
}

json cmd_binned(const CommonOpts& o, int bins, int feature_q, int feature_p,
                bool quantile_bins, bool sqrt_weights) {
    auto loaded = load_dataset(o.data);
    BinnedFitConfig config;
    config.n_bins = bins;
    config.quantile_bins = quantile_bins;
    config.sqrt_count_weights = sqrt_weights;
    config.optimizer = train_config(o);
    BinnedFit fit = binned_mnl(loaded.dataset, feature_q, feature_p, config);

    json payload;
    json records = json::array();
    for (const auto& b : fit.bins)
        records.push_back(
            {{"center", b.center}, {"coefficient", b.coefficient}, {"count", b.count}});
    payload["bins"] = std::move(records);
    payload["wls"] = {{"slope", fit.wls.slope},
                      {"intercept", fit.wls.intercept},
                      {"r_squared", fit.wls.r_squared},
                      {"slope_se", fit.wls.slope_se}};
    payload["total_used"] = fit.total_used;
    payload["csv"] = binned_fit_csv(fit);
    return payload;
}

json cmd_net_extract(const CommonOpts& o, const std::string& edges_path) {
    long dropped = 0;
    auto edges = load_edges(edges_path, &dropped);
    ClosureExtraction ex = extract_closures(edges, o.seed);
    ex.dataset.feature_names = kNetworkFeatureNames;
    if (o.data.empty()) throw DataError("net-extract requires --data (output dataset path)");
    write_dataset(ex.dataset, o.data);
    const std::string log_path = o.data + ".closures.jsonl";
    {
        std::ofstream log(log_path);
        if (!log) throw DataError("cannot write: " + log_path);
        log << closure_log_jsonl(ex.events);
    }
    return {{"n_edges", edges.size()},
            {"dropped_self_loops", dropped},
            {"n_observations", ex.dataset.size()},
            {"skipped_small_sets", ex.skipped_small_sets},
            {"dataset_path", o.data},
            {"closure_log_path", log_path}};
}

json cmd_net_generate(const CommonOpts& o, const std::string& params,
                      const std::string& edges_path, int nodes, long closures) {
    const Model model = load_model(params);
    SyntheticNetConfig config;
    config.n_nodes = nodes;
    config.target_closures = closures;
    config.seed = o.seed;
    SyntheticNet net = generate_synthetic(model, config);
    if (edges_path.empty() || o.data.empty())
        throw DataError("net-generate requires --edges and --data (output paths)");
    write_edges(edges_path, net.edges);
    net.dataset.feature_names = kNetworkFeatureNames;
    write_dataset(net.dataset, o.data);
    return {{"n_edges", net.edges.size()},
            {"closures", net.closures},
            {"edges_path", edges_path},
            {"dataset_path", o.data}};
}

json cmd_em_fit(const CommonOpts& o, int inner_iterations) {
    auto loaded = load_dataset(o.data);
    ChoiceDataset data = loaded.dataset;
    std::optional<Standardizer> s;
    if (o.standardize != "off") {
        s = fit_standardizer(data);
        data = apply_standardizer(*s, data);
    }
    EmConfig config;
    config.inner = train_config(o);
    config.inner.weight_decay = 0.0;  // EM's M-step is unpenalized
    config.inner_iterations = inner_iterations;
    config.max_outer_iterations = o.epochs;
    config.seed = o.seed;
    EmResult result = em_fit(data, config);
    if (s) result.model.standardizer = s;

    json payload;
    payload["model"] = to_json(result.model);
    payload["stop_reason"] = result.stop_reason;
    json trace = json::array();
    for (const auto& t : result.trace)
        trace.push_back({{"t", t.t},
                         {"nll", t.nll},
                         {"grad_norm", t.grad_norm},
                         {"pi", std::vector<double>(t.pi.begin(), t.pi.end())}});
    payload["trace"] = std::move(trace);
    payload["final_nll"] = negative_log_likelihood(result.model, data);
    return payload;
}

json cmd_grid_search(const CommonOpts& o, const std::string& model_name) {
    const ModelKind kind = kind_from_name(model_name);
    auto loaded = load_dataset(o.data);
    DatasetSplit split =
        split_dataset(loaded.dataset, split_mode(o.split), SplitFractions{}, o.seed);
    auto standardizer = standardize_split(split, loaded.dataset, o.standardize);

    TrainConfig base = train_config(o);
    GridSearchResult result = grid_search(kind, split.train, split.validation,
                                          GridSearchSpec{}, base);
    if (standardizer) result.best.standardizer = standardizer;

    json payload;
    payload["learning_rate"] = result.learning_rate;
    payload["weight_decay"] = result.weight_decay;
    payload["model"] = to_json(result.best);
    payload["split"] = split_json(split);
    json table = json::array();
    for (const auto& cell : result.table)
        table.push_back({{"lr", cell.learning_rate},
                         {"wd", cell.weight_decay},
                         {"worst_val_nll", cell.worst_val_nll},
                         {"diverged", cell.diverged}});
    payload["table"] = std::move(table);
    payload["test_nll_per_obs"] = mean_nll(result.best, split.test);
    return payload;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discrete choice models with feature context effects"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string model_name = "mnl", params, null_path, full_path, part = "test";
    std::string entry, lambdas, edges_path;
    int bins = 100, feature_q = 0, feature_p = 0, inner_iterations = 50;
    int nodes = 1000;
    long closures = 50'000;
    bool wilcoxon = false, quantile_bins = false, sqrt_weights = false;

    auto add_common = [&](CLI::App* cmd, bool needs_data = true) {
        auto* d = cmd->add_option("--data", o.data, "JSONL choice dataset");
        if (needs_data) d->required();
        cmd->add_option("--seed", o.seed, "RNG seed (echoed in the report)");
        cmd->add_option("--out", o.out, "report path (stdout when absent)");
        return cmd;
    };

    auto* fit = add_common(app.add_subcommand("fit", "maximum-likelihood model fit"));
    fit->add_option("--model", model_name)->check(CLI::IsMember({"mnl", "lcl", "mixed", "dlcl"}));
    fit->add_option("--split", o.split)->check(CLI::IsMember({"random", "temporal"}));
    add_optimizer_flags(fit, o);
    add_standardize_flag(fit, o);

    auto* eval = add_common(app.add_subcommand("eval", "NLL and mean relative rank"));
    eval->add_option("--params", params, "model JSON")->required();
    eval->add_option("--split", o.split)->check(CLI::IsMember({"random", "temporal"}));
    eval->add_option("--part", part)->check(CLI::IsMember({"train", "val", "test", "all"}));

    auto* lrt = app.add_subcommand("lrt", "likelihood-ratio or Wilcoxon comparison");
    lrt->add_option("--data", o.data, "JSONL choice dataset");
    lrt->add_option("--seed", o.seed);
    lrt->add_option("--out", o.out);
    lrt->add_option("--null", null_path, "null model (or eval report)")->required();
    lrt->add_option("--full", full_path, "full model (or eval report)")->required();
    lrt->add_flag("--wilcoxon", wilcoxon, "signed-rank test on eval-report rank vectors");

    auto* clrt = add_common(app.add_subcommand("constrained-lrt", "single-entry LCL test"));
    clrt->add_option("--entry", entry, "p,q: the only free entry of A")->required();
    add_optimizer_flags(clrt, o);
    add_standardize_flag(clrt, o);

    add_common(app.add_subcommand("identify", "LCL identifiability rank check"));

    auto* l1 = add_common(app.add_subcommand("l1path", "L1 regularization path"));
    l1->add_option("--lambdas", lambdas, "comma-separated increasing penalties")->required();
    add_optimizer_flags(l1, o);
    add_standardize_flag(l1, o);

    auto* binned = add_common(app.add_subcommand("binned", "per-bin MNL coefficient trend"));
    binned->add_option("--bins", bins);
    binned->add_option("--feature-q", feature_q, "binning (context) feature")->required();
    binned->add_option("--feature-p", feature_p, "tracked coefficient")->required();
    binned->add_flag("--quantile-bins", quantile_bins);
    binned->add_flag("--sqrt-weights", sqrt_weights);
    add_optimizer_flags(binned, o);

    auto* nex = add_common(app.add_subcommand("net-extract", "triadic-closure choice dataset"));
    nex->add_option("--edges", edges_path, "TSV temporal edge list")->required();

    auto* ngen = add_common(app.add_subcommand("net-generate", "synthetic choice network"));
    ngen->add_option("--params", params, "generator model JSON")->required();
    ngen->add_option("--edges", edges_path, "output edge list path")->required();
    ngen->add_option("--nodes", nodes);
    ngen->add_option("--closures", closures);

    auto* em = add_common(app.add_subcommand("em-fit", "DLCL expectation-maximization"));
    em->add_option("--inner", inner_iterations, "M-step Adam iterations");
    add_optimizer_flags(em, o);
    add_standardize_flag(em, o);

    auto* grid = add_common(app.add_subcommand("grid-search", "lr/wd hyperparameter grid"));
    grid->add_option("--model", model_name)
        ->check(CLI::IsMember({"mnl", "lcl", "mixed", "dlcl"}));
    grid->add_option("--split", o.split)->check(CLI::IsMember({"random", "temporal"}));
    grid->add_option("--epochs", o.epochs);
    grid->add_option("--batch", o.batch);
    add_standardize_flag(grid, o);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help() << "\n";
        return 1;
    }

    const auto start = std::chrono::steady_clock::now();
    try {
        const std::string name = app.get_subcommands().front()->get_name();
        json payload;
        if (name == "fit") payload = cmd_fit(o, model_name);
        else if (name == "eval") payload = cmd_eval(o, params, part);
        else if (name == "lrt") payload = cmd_lrt(o, null_path, full_path, wilcoxon);
        else if (name == "constrained-lrt") payload = cmd_constrained_lrt(o, entry);
        else if (name == "identify") payload = cmd_identify(o);
        else if (name == "l1path") payload = cmd_l1path(o, lambdas);
        else if (name == "binned")
            payload = cmd_binned(o, bins, feature_q, feature_p, quantile_bins, sqrt_weights);
        else if (name == "net-extract") payload = cmd_net_extract(o, edges_path);
        else if (name == "net-generate")
            payload = cmd_net_generate(o, params, edges_path, nodes, closures);
        else if (name == "em-fit") payload = cmd_em_fit(o, inner_iterations);
        else if (name == "grid-search") payload = cmd_grid_search(o, model_name);

        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_report(make_report(name, args, o.seed, elapsed, std::move(payload)), o.out, out);
        return 0;
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace choicectx::cli
