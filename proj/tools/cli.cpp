#include "cli.hpp"

#include "mcal/parallel.hpp"
#include "mcal/pipeline.hpp"
#include "mcal/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace mcal::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Args {
    std::string command;

    std::string input;
    std::string outcome = "y";
    std::string treatment = "t";
    std::vector<std::string> covariates;
    std::string method = "rcal";
    std::string constraint = "one-to-zero";
    std::string link = "identity";
    std::string lambda = "cv";
    std::string lambda_or = "cv";
    std::string selection = "min";
    std::string targets = "all";
    double level = 0.95;
    std::uint64_t seed = 1;
    std::string output;
    int threads = 0;
    std::string interactions = "none";
    double min_frequency = 0.008;
    bool no_standardize = false;

    std::string config = "C1";
    Index n = 1000;
    Index p = 50;
    int reps = 200;
    std::string methods = "rcal,rmls,rmlg";
    std::string dataset_out;
    int replication = 0;
};

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::optional<double> parse_lambda(const std::string& s, const std::string& flag)
{
    if (s == "cv") {
        return std::nullopt;
    }
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || !std::isfinite(value) || value < 0.0) {
        throw ValidationError(flag + " must be \"cv\" or a non-negative number, got '" + s + "'");
    }
    return value;
}

Constraint parse_constraint(const std::string& s)
{
    if (s == "one-to-zero") {
        return Constraint::OneToZero;
    }
    if (s == "sum-to-zero") {
        return Constraint::SumToZero;
    }
    throw ValidationError("unknown constraint '" + s + "' (expected one-to-zero or sum-to-zero)");
}

Link parse_link(const std::string& s)
{
    if (s == "identity") {
        return Link::Identity;
    }
    if (s == "logit") {
        return Link::Logit;
    }
    throw ValidationError("unknown link '" + s + "' (expected identity or logit)");
}

Selection parse_selection(const std::string& s)
{
    if (s == "min") {
        return Selection::Min;
    }
    if (s == "1se") {
        return Selection::OneSe;
    }
    throw ValidationError("unknown selection '" + s + "' (expected min or 1se)");
}

void check_level(double level)
{
    if (!(level > 0.0 && level < 1.0)) {
        throw ValidationError("--level must lie strictly between 0 and 1");
    }
}

// The output directory may exist already, but must not be a regular file.
void check_output(const std::string& output)
{
    if (output.empty()) {
        throw ValidationError("--output is required");
    }
    const fs::path dir(output);
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw ValidationError("output path '" + output + "' exists and is not a directory");
    }
}

PipelineOptions pipeline_options(const Args& a)
{
    PipelineOptions opts;
    opts.method = parse_method(a.method);
    opts.constraint = parse_constraint(a.constraint);
    opts.link = parse_link(a.link);
    opts.lambda_ps = parse_lambda(a.lambda, "--lambda");
    opts.lambda_or = parse_lambda(a.lambda_or, "--lambda-or");
    opts.selection = parse_selection(a.selection);
    check_level(a.level);
    opts.level = a.level;
    opts.seed = a.seed;
    opts.standardize = !a.no_standardize;
    opts.threads = resolve_threads(a.threads);
    return opts;
}

std::vector<int> parse_targets(const std::string& spec, const std::vector<std::string>& labels)
{
    std::vector<int> out;
    if (spec == "all") {
        for (std::size_t k = 0; k < labels.size(); ++k) {
            out.push_back(static_cast<int>(k));
        }
        return out;
    }
    for (const auto& item : split(spec, ',')) {
        const auto it = std::find(labels.begin(), labels.end(), item);
        if (it == labels.end()) {
            throw ValidationError("target '" + item + "' is not a treatment level in the data");
        }
        const int code = static_cast<int>(it - labels.begin());
        if (std::find(out.begin(), out.end(), code) == out.end()) {
            out.push_back(code);
        }
    }
    if (out.empty()) {
        throw ValidationError("--target lists no treatment levels");
    }
    return out;
}

LoadedData load_input(const Args& a)
{
    if (a.input.empty()) {
        throw ValidationError("--input is required");
    }
    if (a.interactions != "none" && a.interactions != "pairwise") {
        throw ValidationError("unknown interactions '" + a.interactions + "' (expected none or pairwise)");
    }
    if (!(a.min_frequency >= 0.0 && a.min_frequency <= 1.0)) {
        throw ValidationError("--min-frequency must lie in [0, 1]");
    }
    LoadedData loaded = load_csv(a.input, ColumnSchema{a.outcome, a.treatment, a.covariates});
    if (a.interactions == "pairwise") {
        loaded.data = expand_pairwise(loaded.data, a.min_frequency);
    }
    return loaded;
}

// Files are assembled in memory and written only once every computation has
// succeeded, so a failing command leaves nothing behind.
struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;

    void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }

    void write(const std::string& dir) const
    {
        fs::create_directories(dir);
        for (const auto& [name, content] : files) {
            const fs::path path = fs::path(dir) / name;
            std::ofstream out(path, std::ios::binary);
            if (!out) {
                throw ValidationError("cannot open output file '" + path.string() + "'");
            }
            out << content;
            if (!out) {
                throw ValidationError("failed writing '" + path.string() + "'");
            }
        }
    }
};

std::string fmt(double v)
{
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + '"';
}

ordered_json vector_json(const Vector& v)
{
    ordered_json out = ordered_json::array();
    for (Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

ordered_json interval_json(const Interval& ci, double level)
{
    return {{"level", level}, {"lower", ci.lower}, {"upper", ci.upper}};
}

ordered_json solve_json(const SolveResult& s)
{
    return {{"converged", s.converged},
            {"outer_iterations", s.outer_iters},
            {"objective", s.objective},
            {"active_rows", s.active_rows.size()},
            {"curvature_bound", s.last_b},
            {"diagnostic", s.diagnostic},
            {"trace", s.trace}};
}

ordered_json cv_json(const CVPath& path)
{
    ordered_json folds = ordered_json::array();
    for (Index f = 0; f < path.fold_losses.rows(); ++f) {
        folds.push_back(vector_json(path.fold_losses.row(f).transpose()));
    }
    return {{"grid", path.grid},
            {"cv_mean", vector_json(path.cv_mean)},
            {"cv_se", vector_json(path.cv_se)},
            {"fold_losses", folds},
            {"index_min", path.index_min},
            {"index_1se", path.index_1se},
            {"lambda_min", path.lambda_min},
            {"lambda_1se", path.lambda_1se},
            {"stratified_folds", path.stratified}};
}

ordered_json balance_json(const BalanceReport& b, const std::vector<std::string>& names)
{
    ordered_json cov = ordered_json::array();
    for (std::size_t j = 0; j < b.residuals.size(); ++j) {
        cov.push_back({{"term", names[j + 1]},
                       {"residual", b.residuals[j]},
                       {"standardized_difference", b.standardized_differences[j]}});
    }
    return {{"weight_sum_residual", b.weight_sum_residual},
            {"max_residual", b.max_residual},
            {"balance_bound", b.balance_bound},
            {"mascd", b.mascd},
            {"rv", b.rv},
            {"covariates", cov}};
}

ordered_json verify_json(const VerifyReport& v)
{
    ordered_json checks = ordered_json::array();
    for (const auto& c : v.checks) {
        checks.push_back({{"name", c.name},
                          {"value", c.value},
                          {"bound", c.bound},
                          {"passed", c.passed},
                          {"informational", c.informational}});
    }
    return {{"passed", v.passed}, {"checks", checks}};
}

ordered_json header_json(const Args& a, const PipelineOptions& opts, const LoadedData& loaded)
{
    const Dataset& d = loaded.data;
    return {{"schema_version", kSchemaVersion},
            {"command", a.command},
            {"input", a.input},
            {"method", to_string(opts.method)},
            {"constraint", to_string(opts.constraint)},
            {"link", to_string(opts.link)},
            {"selection", a.selection},
            {"level", opts.level},
            {"seed", opts.seed},
            {"standardized", opts.standardize},
            {"n", d.n()},
            {"p", d.p()},
            {"k", d.k},
            {"treatment_labels", loaded.treatment_labels},
            {"terms", d.names}};
}

class CoefficientTable {
public:
    CoefficientTable(const std::vector<std::string>& names, const std::vector<std::string>& labels,
                     const Standardization& scaling)
        : names_(names), labels_(labels), scaling_(scaling)
    {
        out_ << "target,model,term,column,coefficient\n";
    }

    // Coefficients are reported on the scale of the input regressors.
    void add(const std::string& target, const std::string& model, const Matrix& coef,
             const std::vector<int>& columns)
    {
        const Matrix raw = scaling_.applied ? scaling_.destandardize(coef) : coef;
        for (Index c = 0; c < raw.cols(); ++c) {
            const std::string& col = labels_[static_cast<std::size_t>(columns[static_cast<std::size_t>(c)])];
            for (Index j = 0; j < raw.rows(); ++j) {
                out_ << csv_field(target) << ',' << model << ',' << csv_field(names_[static_cast<std::size_t>(j)])
                     << ',' << csv_field(col) << ',' << fmt(raw(j, c)) << '\n';
            }
        }
    }

    std::string str() const { return out_.str(); }

private:
    const std::vector<std::string>& names_;
    const std::vector<std::string>& labels_;
    const Standardization& scaling_;
    std::ostringstream out_;
};

std::vector<int> all_columns(Index k)
{
    std::vector<int> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<int>(i);
    }
    return out;
}

ordered_json ps_json(const PsFit& ps)
{
    return {{"method", to_string(ps.model.method)},
            {"reference", ps.model.reference},
            {"lambda", ps.model.lambda},
            {"solve", solve_json(ps.solve)}};
}

ordered_json or_json(const OrFit& fit, const std::vector<std::string>& labels)
{
    ordered_json solves = ordered_json::array();
    for (std::size_t c = 0; c < fit.solves.size(); ++c) {
        ordered_json s = solve_json(fit.solves[c]);
        s["column"] = labels[static_cast<std::size_t>(fit.model.columns[c])];
        s["lambda"] = fit.model.lambdas[std::min(c, fit.model.lambdas.size() - 1)];
        solves.push_back(std::move(s));
    }
    return {{"method", to_string(fit.model.method)},
            {"link", to_string(fit.model.link)},
            {"lambdas", fit.model.lambdas},
            {"solves", solves}};
}

ordered_json estimate_json(const Dataset& d, const EstimateReport& e, double level,
                           const std::vector<std::string>& labels)
{
    const double n = static_cast<double>(d.n());
    ordered_json nu = ordered_json::array();
    for (const auto& [k, value] : e.nu_hat) {
        const double u = e.u_hat.at(k);
        nu.push_back({{"group", labels[static_cast<std::size_t>(k)]},
                      {"estimate", value},
                      {"variance", u},
                      {"std_error", std::sqrt(u / n)},
                      {"ci", interval_json(wald_ci(value, u, d.n(), level), level)}});
    }
    return {{"mu_hat", e.mu_hat},
            {"variance", e.v_hat},
            {"std_error", std::sqrt(e.v_hat / n)},
            {"ci", interval_json(e.ci(level), level)},
            {"nu", nu}};
}

ordered_json paths_json(const std::vector<CVPath>& paths)
{
    ordered_json out = ordered_json::array();
    for (const auto& p : paths) {
        out.push_back(cv_json(p));
    }
    return out;
}

std::string cv_csv(const PipelineResult& res, const std::vector<std::string>& labels)
{
    std::ostringstream out;
    out << "target,model,path,index,lambda,cv_mean,cv_se";
    for (int f = 1; f <= kFolds; ++f) {
        out << ",fold" << f;
    }
    out << '\n';
    auto dump = [&](const std::string& target, const std::string& model, const std::vector<CVPath>& paths) {
        for (std::size_t q = 0; q < paths.size(); ++q) {
            const CVPath& p = paths[q];
            for (std::size_t j = 0; j < p.grid.size(); ++j) {
                const Index jj = static_cast<Index>(j);
                out << csv_field(target) << ',' << model << ',' << q << ',' << j << ',' << fmt(p.grid[j]) << ','
                    << fmt(p.cv_mean(jj)) << ',' << fmt(p.cv_se(jj));
                for (Index f = 0; f < p.fold_losses.rows(); ++f) {
                    out << ',' << fmt(p.fold_losses(f, jj));
                }
                out << '\n';
            }
        }
    };
    for (const auto& tr : res.targets) {
        const std::string target = labels[static_cast<std::size_t>(tr.target)];
        dump(target, "propensity", tr.ps_paths);
        dump(target, "outcome", tr.or_paths);
    }
    return out.str();
}

int warn_failed_checks(const PipelineResult& res, const std::vector<std::string>& labels)
{
    int failed = 0;
    for (const auto& tr : res.targets) {
        if (!tr.verify.passed) {
            std::cerr << "warning: post-fit checks failed for target " << labels[static_cast<std::size_t>(tr.target)]
                      << '\n';
            ++failed;
        }
        if (!tr.ps.solve.converged) {
            std::cerr << "warning: propensity fit for target " << labels[static_cast<std::size_t>(tr.target)]
                      << " did not converge: " << tr.ps.solve.diagnostic << '\n';
        }
    }
    return failed;
}

// estimate, diagnose and cv-path all run the full pipeline and differ in
// what they write.
void run_pipeline_command(const Args& a, Outputs& files)
{
    PipelineOptions opts = pipeline_options(a);
    if (a.command == "cv-path") {
        opts.lambda_ps.reset();
        opts.lambda_or.reset();
    }
    const LoadedData loaded = load_input(a);
    const std::vector<int> targets = parse_targets(a.targets, loaded.treatment_labels);
    const auto& labels = loaded.treatment_labels;

    const PipelineResult res = run_pipeline(loaded.data, targets, opts);
    warn_failed_checks(res, labels);

    ordered_json report = header_json(a, opts, loaded);
    ordered_json tj = ordered_json::array();
    CoefficientTable coefs(res.data.names, labels, res.scaling);
    const bool shared = opts.method != Method::Rcal;
    for (std::size_t i = 0; i < res.targets.size(); ++i) {
        const TargetResult& tr = res.targets[i];
        const std::string label = labels[static_cast<std::size_t>(tr.target)];
        ordered_json entry = {{"target", label}};
        if (a.command != "cv-path") {
            entry["estimate"] = estimate_json(res.data, tr.estimate, opts.level, labels);
        }
        entry["lambda_ps"] = tr.ps.model.lambda;
        entry["lambda_or"] = tr.outcome.model.lambdas;
        entry["propensity"] = ps_json(tr.ps);
        entry["outcome"] = or_json(tr.outcome, labels);
        entry["balance"] = balance_json(tr.balance, res.data.names);
        entry["verify"] = verify_json(tr.verify);
        if (a.command != "diagnose") {
            entry["cv"] = {{"propensity", paths_json(tr.ps_paths)}, {"outcome", paths_json(tr.or_paths)}};
        }
        tj.push_back(std::move(entry));

        if (!shared || i == 0) {
            const std::string who = shared ? "all" : label;
            coefs.add(who, "propensity", tr.ps.model.gamma, all_columns(res.data.k));
            coefs.add(who, "outcome", tr.outcome.model.coef, tr.outcome.model.columns);
        }
    }
    report["targets"] = tj;
    if (a.command == "estimate" && res.targets.size() > 1) {
        ordered_json contrasts = ordered_json::array();
        const TargetResult& base = res.targets.front();
        for (std::size_t i = 1; i < res.targets.size(); ++i) {
            const Contrast c = ate_contrast(res.targets[i].estimate, base.estimate, opts.level);
            contrasts.push_back({{"target", labels[static_cast<std::size_t>(res.targets[i].target)]},
                                 {"versus", labels[static_cast<std::size_t>(base.target)]},
                                 {"difference", c.diff},
                                 {"variance", c.variance},
                                 {"ci", interval_json(c.ci, opts.level)}});
        }
        report["contrasts"] = contrasts;
    }

    files.add("report.json", report.dump(2) + "\n");
    if (a.command != "cv-path") {
        files.add("coefficients.csv", coefs.str());
    } else {
        files.add("cv_path.csv", cv_csv(res, labels));
    }
}

// fit-ps and fit-or stop before the augmented estimator.
void run_fit_command(const Args& a, Outputs& files)
{
    const PipelineOptions opts = pipeline_options(a);
    const LoadedData loaded = load_input(a);
    const std::vector<int> targets = parse_targets(a.targets, loaded.treatment_labels);
    const auto& labels = loaded.treatment_labels;

    Dataset d = loaded.data;
    Standardization scaling;
    if (opts.standardize && d.p() > 0) {
        std::tie(d, scaling) = standardize(loaded.data);
    }

    ordered_json report = header_json(a, opts, loaded);
    ordered_json tj = ordered_json::array();
    CoefficientTable coefs(d.names, labels, scaling);
    const bool rcal = opts.method == Method::Rcal;
    const std::vector<int> fit_targets = rcal ? targets : std::vector<int>{0};

    for (int t : fit_targets) {
        const std::string label = rcal ? labels[static_cast<std::size_t>(t)] : std::string("all");
        std::vector<CVPath> ps_paths;
        const PsFit ps = fit_ps(d, rcal ? PsMethod::Rcal : PsMethod::Rml, t, opts, &ps_paths);
        ordered_json entry = {{"target", label}, {"lambda_ps", ps.model.lambda}, {"propensity", ps_json(ps)}};
        coefs.add(label, "propensity", ps.model.gamma, all_columns(d.k));
        if (a.command == "fit-or") {
            const Matrix probs = predict_probs(ps.model, d.f);
            std::vector<CVPath> or_paths;
            const OrFit fit = fit_or(d, opts.method, t, probs, opts, &or_paths);
            entry["lambda_or"] = fit.model.lambdas;
            entry["outcome"] = or_json(fit, labels);
            entry["cv"] = {{"propensity", paths_json(ps_paths)}, {"outcome", paths_json(or_paths)}};
            coefs.add(label, "outcome", fit.model.coef, fit.model.columns);
        } else {
            entry["balance"] =
                balance_json(balance_report(d, predict_probs(ps.model, d.f), t, ps.model.lambda, opts.constraint),
                             d.names);
            entry["cv"] = {{"propensity", paths_json(ps_paths)}};
        }
        if (!ps.solve.converged) {
            std::cerr << "warning: propensity fit for target " << label << " did not converge: "
                      << ps.solve.diagnostic << '\n';
        }
        tj.push_back(std::move(entry));
    }
    report["targets"] = tj;
    files.add("report.json", report.dump(2) + "\n");
    files.add("coefficients.csv", coefs.str());
}

std::vector<Method> parse_methods(const std::string& s)
{
    std::vector<Method> out;
    for (const auto& item : split(s, ',')) {
        const Method m = parse_method(item);
        if (std::find(out.begin(), out.end(), m) == out.end()) {
            out.push_back(m);
        }
    }
    if (out.empty()) {
        throw ValidationError("--methods lists no methods");
    }
    return out;
}

std::vector<int> parse_sim_targets(const std::string& s)
{
    if (s == "all") {
        return {0, 1, 2, 3};
    }
    std::vector<int> out;
    for (const auto& item : split(s, ',')) {
        if (item.size() != 1 || item[0] < '0' || item[0] >= '0' + kSimTreatments) {
            throw ValidationError("simulation targets must be in 0..3, got '" + item + "'");
        }
        const int t = item[0] - '0';
        if (std::find(out.begin(), out.end(), t) == out.end()) {
            out.push_back(t);
        }
    }
    if (out.empty()) {
        throw ValidationError("--target lists no treatment levels");
    }
    return out;
}

ordered_json sim_json(const SimSummary& s)
{
    const SimConfig& c = s.config;
    std::vector<std::string> methods;
    for (Method m : c.methods) {
        methods.push_back(to_string(m));
    }
    ordered_json rows = ordered_json::array();
    for (const auto& r : s.rows) {
        rows.push_back({{"method", to_string(r.method)},
                        {"target", r.target},
                        {"truth", r.truth},
                        {"bias", r.bias},
                        {"sqrt_var", r.sqrt_var},
                        {"sqrt_evar", r.sqrt_evar},
                        {"cov90", r.cov90},
                        {"cov95", r.cov95},
                        {"used", r.used},
                        {"failures", r.failures},
                        {"estimates", r.estimates},
                        {"variances", r.variances}});
    }
    return {{"schema_version", kSchemaVersion},
            {"command", "simulate"},
            {"config", to_string(c.scenario)},
            {"n", c.n},
            {"p", c.p},
            {"replications", c.replications},
            {"seed", c.seed},
            {"methods", methods},
            {"targets", c.targets},
            {"selection", c.pipeline.selection == Selection::Min ? "min" : "1se"},
            {"rows", rows}};
}

void run_simulate(const Args& a, Outputs& files)
{
    SimConfig cfg;
    cfg.scenario = parse_scenario(a.config);
    cfg.n = a.n;
    cfg.p = a.p;
    cfg.replications = a.reps;
    cfg.seed = a.seed;
    cfg.methods = parse_methods(a.methods);
    cfg.targets = parse_sim_targets(a.targets);
    cfg.pipeline.constraint = parse_constraint(a.constraint);
    cfg.pipeline.link = parse_link(a.link);
    cfg.pipeline.selection = parse_selection(a.selection);
    check_level(a.level);
    cfg.pipeline.level = a.level;
    cfg.threads = resolve_threads(a.threads);
    if (a.replication < 0) {
        throw ValidationError("--replication must be non-negative");
    }

    if (!a.dataset_out.empty()) {
        const SimDraw draw = gen_data(cfg.scenario, cfg.n, cfg.p, cfg.seed, static_cast<std::uint64_t>(a.replication));
        write_csv(a.dataset_out, draw.data);
        return;
    }
    cfg.validate();
    const SimSummary s = run_monte_carlo(cfg);
    std::cerr << "simulate: " << cfg.replications << " replications in " << std::fixed << std::setprecision(1)
              << s.seconds << " s\n";
    files.add("simulation.csv", summary_csv(s));
    files.add("simulation.json", sim_json(s).dump(2) + "\n");
}

void add_common(CLI::App* sub, Args& a)
{
    sub->add_option("--seed", a.seed, "Random seed for folds and simulation");
    sub->add_option("--output", a.output, "Output directory");
    sub->add_option("--threads", a.threads, "Worker threads (default: available cores; MCAL_THREADS overrides)");
    sub->add_option("--constraint", a.constraint, "one-to-zero or sum-to-zero");
    sub->add_option("--link", a.link, "Outcome link: identity or logit");
    sub->add_option("--selection", a.selection, "Cross-validation rule: min or 1se");
    sub->add_option("--level", a.level, "Confidence level");
}

void add_model(CLI::App* sub, Args& a)
{
    add_common(sub, a);
    sub->add_option("--input", a.input, "Input CSV with a header row");
    sub->add_option("--outcome", a.outcome, "Outcome column");
    sub->add_option("--treatment", a.treatment, "Treatment column (integer labels)");
    sub->add_option("--covariates", a.covariates, "Covariate columns (default: all others)")->delimiter(',');
    sub->add_option("--method", a.method, "rcal, rmls or rmlg");
    sub->add_option("--lambda", a.lambda, "Propensity penalty, or cv");
    sub->add_option("--lambda-or", a.lambda_or, "Outcome penalty, or cv");
    sub->add_option("--target", a.targets, "Comma-separated treatment labels, or all");
    sub->add_option("--interactions", a.interactions, "none or pairwise");
    sub->add_option("--min-frequency", a.min_frequency, "Minimum nonzero fraction for pairwise interactions");
    sub->add_flag("--no-standardize", a.no_standardize, "Fit on the raw regressors");
}

int dispatch(Args& a)
{
    if (a.command == "simulate") {
        if (a.dataset_out.empty()) {
            check_output(a.output);
        }
    } else {
        check_output(a.output);
    }
    Outputs files;
    if (a.command == "simulate") {
        run_simulate(a, files);
    } else if (a.command == "fit-ps" || a.command == "fit-or") {
        run_fit_command(a, files);
    } else {
        run_pipeline_command(a, files);
    }
    if (!files.files.empty()) {
        files.write(a.output);
    }
    return kExitOk;
}

} // namespace

int run(int argc, char** argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(args);
}

int run(const std::vector<std::string>& args)
{
    Args a;
    CLI::App app{"Multi-treatment calibrated estimation of average treatment effects", "mcal"};
    app.require_subcommand(1, 1);

    const std::pair<const char*, const char*> commands[] = {
        {"fit-ps", "Fit the propensity score model"},
        {"fit-or", "Fit the propensity and outcome models"},
        {"estimate", "Full pipeline: propensity, outcome and augmented IPW estimates"},
        {"diagnose", "Balance and post-fit checks for the fitted models"},
        {"cv-path", "Cross-validation losses along the penalty grids"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        add_model(sub, a);
        sub->callback([&a, name = std::string(name)] { a.command = name; });
    }
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study on a built-in configuration");
    add_common(sim, a);
    sim->add_option("--config", a.config, "C1, C2 or C3");
    sim->add_option("--n", a.n, "Sample size");
    sim->add_option("--p", a.p, "Number of covariates");
    sim->add_option("--reps", a.reps, "Replications");
    sim->add_option("--methods", a.methods, "Comma-separated methods");
    sim->add_option("--target", a.targets, "Comma-separated targets in 0..3, or all");
    sim->add_option("--dataset-out", a.dataset_out, "Write one generated dataset as CSV instead of simulating");
    sim->add_option("--replication", a.replication, "Replication index used with --dataset-out");
    sim->callback([&a] { a.command = "simulate"; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }

    try {
        return dispatch(a);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

} // namespace mcal::cli
