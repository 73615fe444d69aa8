#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "tmhmc/tmhmc.hpp"

namespace {

using namespace tmhmc;
using namespace tmhmc::models;

constexpr int exit_usage = 2;
constexpr int exit_data = 3;
constexpr int exit_runtime = 4;

struct Options {
    std::string model = "sv";
    std::string map = "laplace";
    std::size_t newton_steps = 1;  // K
    std::size_t fit_sweeps = 2;    // J
    std::size_t fit_paths = 6;     // r
    std::size_t steps = 4;         // L
    double step_size = 0.0;        // 0 selects (pi/2)/L
    std::size_t iters = 1500;
    std::size_t burnin = 500;
    std::size_t replicas = 1;
    std::uint64_t seed = 1;
    std::string data;
    std::string out = ".";
    // simulate only
    std::size_t series_len = 0;  // 0 selects the per-model default
    std::string theta_csv;
    std::size_t rank = 3;
};

std::size_t to_size(const std::string& value, std::size_t line) {
    const long v = detail::parse_integer(value, line);
    if (v < 0) throw ParseError("expected a non-negative integer, got '" + value + "'", line);
    return static_cast<std::size_t>(v);
}

void apply_config_entry(Options& o, const ConfigEntry& e) {
    if (e.key == "model") o.model = e.value;
    else if (e.key == "map") o.map = e.value;
    else if (e.key == "K") o.newton_steps = to_size(e.value, e.line);
    else if (e.key == "J") o.fit_sweeps = to_size(e.value, e.line);
    else if (e.key == "r") o.fit_paths = to_size(e.value, e.line);
    else if (e.key == "L") o.steps = to_size(e.value, e.line);
    else if (e.key == "eps") o.step_size = detail::parse_double(e.value, e.line);
    else if (e.key == "iters") o.iters = to_size(e.value, e.line);
    else if (e.key == "burnin") o.burnin = to_size(e.value, e.line);
    else if (e.key == "replicas") o.replicas = to_size(e.value, e.line);
    else if (e.key == "seed") o.seed = static_cast<std::uint64_t>(to_size(e.value, e.line));
    else if (e.key == "data") o.data = e.value;
    else if (e.key == "out") o.out = e.value;
    else if (e.key == "D") o.series_len = to_size(e.value, e.line);
    else if (e.key == "theta") o.theta_csv = e.value;
    else if (e.key == "rank") o.rank = to_size(e.value, e.line);
    else throw ParseError("unknown configuration key '" + e.key + "'", e.line);
}

// The config file (when given) seeds the defaults; flags parsed afterwards by
// the command line take precedence.
void merge_config_file(Options& o, const std::string& path) {
    for (const ConfigEntry& e : parse_config_file(path)) apply_config_entry(o, e);
}

std::vector<double> parse_theta_csv(const std::string& csv) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string tok =
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        out.push_back(detail::parse_double(detail::trim(tok), 0));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

const std::vector<std::string>& known_models() {
    static const std::vector<std::string> names = {"sv", "gamma", "cev", "wishart", "lingauss"};
    return names;
}

void require_known_model(const std::string& name) {
    for (const std::string& m : known_models())
        if (m == name) return;
    throw DomainError("unknown model '" + name + "'");
}

void require_known_map(const std::string& name) {
    if (name != "prior" && name != "laplace" && name != "fisher" && name != "eis")
        throw DomainError("unknown map '" + name + "'");
}

template <class Model>
MapSpec make_map_spec(const Model& model, const Options& o, std::size_t latent_dim) {
    if (o.map == "prior") return MapSpec::prior_map();
    if (o.map == "laplace") return MapSpec::laplace_map(o.newton_steps);
    if (o.map == "fisher") {
        if (!Model::has_fisher)
            throw DomainError("map 'fisher' is not available for model '" + o.model + "'");
        return MapSpec::fisher_map();
    }
    if (o.map == "eis") {
        if (o.fit_sweeps < 1) throw DomainError("eis needs at least one fitting sweep (J >= 1)");
        if (o.fit_paths < 4) throw DomainError("eis needs at least four fitting paths (r >= 4)");
        return MapSpec::eis_map(o.fit_sweeps, o.fit_paths,
                                eis::CrnSet::generate(o.seed, o.fit_paths, latent_dim));
    }
    throw DomainError("unknown map '" + o.map + "'");
}

// Spread of the log importance weight over reference draws; a tiny spread
// means the map has absorbed the latent field and the weight is (nearly)
// deterministic in u.
template <class Target>
void print_weight_spread(const Target& target, std::span<const double> theta_hat) {
    Rng rng(0xD1A6u);
    const std::size_t dim = target.latent_dim();
    std::vector<double> u(dim);
    std::vector<double> logw;
    logw.reserve(100);
    for (int i = 0; i < 100; ++i) {
        double quad = 0.0;
        for (double& v : u) {
            v = rng.normal();
            quad += v * v;
        }
        const double value = target.log_density(theta_hat, u);
        if (!std::isfinite(value)) continue;
        logw.push_back(value + 0.5 * quad);  // drop the reference-density term
    }
    if (logw.size() < 10) {
        std::cout << "log-weight constancy: insufficient finite evaluations [INFO]\n";
        return;
    }
    double mean = 0.0;
    for (double v : logw) mean += v;
    mean /= static_cast<double>(logw.size());
    double ss = 0.0;
    for (double v : logw) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(logw.size() - 1));
    std::cout << "log-weight constancy: stdev over " << logw.size()
              << " reference draws = " << format_double(sd)
              << (sd < 1e-6 ? " [PASS]" : " [INFO]") << '\n';
}

std::size_t replica_threads(std::size_t replicas) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TMHMC_THREADS")) {
        try {
            n = std::max<std::size_t>(1, to_size(env, 0));
        } catch (const ParseError&) {
            std::cerr << "warning: ignoring unparsable TMHMC_THREADS='" << env << "'\n";
        }
    }
    return std::min(n, replicas);
}

template <class Model>
int run_with_model(const Model& model, typename Model::Data data, const Options& o) {
    HmcConfig cfg;
    cfg.steps = o.steps;
    cfg.step_size = o.step_size;
    cfg.iters = o.iters;
    cfg.burnin = o.burnin;
    cfg.seed = o.seed;
    try {
        cfg.validate();
        if (o.replicas < 1) throw DomainError("replicas must be at least 1");
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }

    const std::size_t dim = model.latent_dim(data);
    MapSpec run_spec;
    try {
        run_spec = make_map_spec(model, o, dim);
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }

    std::cout << "model=" << o.model << " map=" << o.map << " D=" << dim
              << " L=" << cfg.steps << " eps=" << format_double(cfg.effective_step())
              << " iters=" << cfg.iters << " burnin=" << cfg.burnin
              << " replicas=" << o.replicas << " seed=" << o.seed << '\n';

    // The deterministic likelihood approximation used for the MAP search and
    // mass matrix always comes from the closed-form map family.
    const std::size_t mass_refinements = run_spec.kind == MapKind::Laplace ? o.newton_steps : 1;
    const ModifiedTarget<Model> mass_target(model, data,
                                            MapSpec::laplace_map(mass_refinements));
    const MassEstimate mass = estimate_mass_matrix(mass_target, model.initial_theta_star(data));
    if (!mass.converged)
        std::cerr << "warning: posterior-mode search did not converge;"
                  << " falling back to the identity mass matrix\n";

    const ModifiedTarget<Model> target(model, data, run_spec);
    print_weight_spread(target, mass.theta_hat);

    std::vector<ChainResult> results(o.replicas);
    std::vector<std::exception_ptr> failures(o.replicas);
    const std::size_t workers = replica_threads(o.replicas);
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t r = next.fetch_add(1); r < o.replicas; r = next.fetch_add(1)) {
            try {
                results[r] = run_chain(target, cfg, mass.mass, mass.theta_hat, r);
            } catch (...) {
                failures[r] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    for (std::size_t r = 0; r < o.replicas; ++r)
        if (failures[r]) std::rethrow_exception(failures[r]);

    std::vector<std::string> names = model.param_names();
    names.push_back("x_1");
    names.push_back("u_1");

    std::filesystem::create_directories(o.out);
    std::vector<ChainSummary> summaries;
    summaries.reserve(o.replicas);
    for (std::size_t r = 0; r < o.replicas; ++r) {
        const ChainResult& res = results[r];
        DrawsFile draws;
        draws.columns = names;
        draws.wall_time_s = res.wall_time_s;
        draws.rows.reserve(res.theta.size());
        std::vector<std::vector<double>> columns(names.size());
        for (auto& col : columns) col.reserve(res.theta.size());
        for (std::size_t i = 0; i < res.theta.size(); ++i) {
            std::vector<double> row;
            row.reserve(2 + names.size());
            row.push_back(res.accept[i]);
            row.push_back(res.energy_error[i]);
            const std::vector<double> constrained = model.to_constrained(res.theta[i]);
            for (std::size_t c = 0; c < constrained.size(); ++c) {
                row.push_back(constrained[c]);
                columns[c].push_back(constrained[c]);
            }
            row.push_back(res.x[i][0]);
            columns[constrained.size()].push_back(res.x[i][0]);
            row.push_back(res.u[i][0]);
            columns[constrained.size() + 1].push_back(res.u[i][0]);
            draws.rows.push_back(std::move(row));
        }
        const std::string path =
            (std::filesystem::path(o.out) / ("draws_" + std::to_string(r + 1) + ".csv"))
                .string();
        write_draws(path, draws);
        summaries.push_back(summarize(names, columns, res.wall_time_s));
        std::cout << "replica " << (r + 1) << ": accept=" << format_double(res.accept_rate)
                  << " wall_s=" << format_double(res.wall_time_s) << " -> " << path << '\n';
    }

    const std::string summary_path =
        (std::filesystem::path(o.out) / "summary.csv").string();
    write_summary(summary_path, summaries, aggregate_min(summaries),
                  aggregate_mean(summaries));
    std::cout << "summary -> " << summary_path << '\n';
    return 0;
}

int cmd_run(const Options& o) {
    try {
        require_known_model(o.model);
        require_known_map(o.map);
        if (o.data.empty()) throw DomainError("run needs --data");
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }

    try {
        if (o.model == "wishart") {
            const std::vector<Eigen::MatrixXd> ys = read_matrix_series(o.data);
            const auto rank = static_cast<std::size_t>(ys.front().rows());
            const Wishart model(rank);
            return run_with_model(model, Wishart::make_data(rank, ys), o);
        }
        const std::vector<double> y = read_scalar_series(o.data);
        if (o.model == "sv") return run_with_model(Sv{}, Sv::make_data(y), o);
        if (o.model == "gamma") return run_with_model(GammaSsm{}, GammaSsm::make_data(y), o);
        if (o.model == "cev") return run_with_model(Cev{}, Cev::make_data(y), o);
        return run_with_model(LinGauss{}, LinGauss::make_data(y), o);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

std::size_t default_series_len(const std::string& model) {
    if (model == "sv") return 945;
    if (model == "gamma") return 2514;
    if (model == "cev") return 3082;
    if (model == "wishart") return 2371;
    return 50;
}

std::vector<double> default_theta(const std::string& model, std::size_t rank) {
    if (model == "sv") return {-0.021, 0.98, 0.15};
    if (model == "gamma") return {0.13, 2.7, 0.98, 0.22};
    if (model == "cev") return {0.01, 0.17, 1.18, 0.41, 0.0005};
    if (model == "lingauss") return {0.0, 0.95, 0.2, 0.2};
    std::vector<double> theta;
    theta.push_back(30.0);  // nu
    for (std::size_t s = 0; s < rank; ++s) theta.push_back(1.0);    // mu
    for (std::size_t s = 0; s < rank; ++s) theta.push_back(0.95);   // delta
    for (std::size_t s = 0; s < rank; ++s) theta.push_back(0.25);   // sigma
    for (std::size_t k = 0; k < rank * (rank - 1) / 2; ++k) theta.push_back(0.5);
    return theta;
}

void print_theta(std::span<const std::string> names, std::span<const double> theta) {
    std::cout << "true theta:";
    for (std::size_t i = 0; i < names.size(); ++i)
        std::cout << ' ' << names[i] << '=' << format_double(theta[i]);
    std::cout << '\n';
}

int cmd_simulate(const Options& o) {
    try {
        require_known_model(o.model);
        if (o.out.empty() || o.out == ".") throw DomainError("simulate needs --out <file>");
        const std::size_t n = o.series_len ? o.series_len : default_series_len(o.model);
        if (n < 2) throw DomainError("series length must be at least 2 (D >= 2)");
        if (o.model == "wishart" && o.rank < 2)
            throw DomainError("wishart rank must be at least 2");

        std::vector<double> theta = o.theta_csv.empty()
                                        ? default_theta(o.model, o.rank)
                                        : parse_theta_csv(o.theta_csv);
        const auto check_arity = [&](std::size_t want) {
            if (theta.size() != want)
                throw DomainError("model '" + o.model + "' expects " + std::to_string(want) +
                                  " parameter values, got " + std::to_string(theta.size()));
        };

        if (o.model == "wishart") {
            const Wishart model(o.rank);
            check_arity(model.n_params());
            // Validate by round-tripping through the unconstrained coordinates.
            model.params<double>(model.to_unconstrained(theta));
            const Wishart::Data data = model.simulate(theta, n, o.seed);
            std::vector<Eigen::MatrixXd> ys;
            ys.reserve(data.n);
            for (std::size_t t = 0; t < data.n; ++t)
                ys.push_back(data.yinv[t].llt().solve(
                    Eigen::MatrixXd::Identity(data.r, data.r)));
            write_matrix_series(o.out, ys);
            print_theta(model.param_names(), theta);
        } else {
            const auto emit = [&](const auto& model) {
                check_arity(model.n_params());
                model.template params<double>(model.to_unconstrained(theta));
                write_scalar_series(o.out, model.simulate(theta, n, o.seed).y);
                print_theta(model.param_names(), theta);
            };
            if (o.model == "sv") emit(Sv{});
            else if (o.model == "gamma") emit(GammaSsm{});
            else if (o.model == "cev") emit(Cev{});
            else emit(LinGauss{});
        }
        std::cout << "wrote " << o.out << " (" << n << " observations, seed " << o.seed
                  << ")\n";
        return 0;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

int cmd_summary(const std::vector<std::string>& files, const std::string& out) {
    try {
        std::vector<ChainSummary> summaries;
        summaries.reserve(files.size());
        for (const std::string& path : files) {
            const DrawsFile draws = read_draws(path);
            std::vector<std::vector<double>> columns(draws.columns.size());
            for (auto& col : columns) col.reserve(draws.rows.size());
            for (const std::vector<double>& row : draws.rows)
                for (std::size_t c = 0; c < draws.columns.size(); ++c)
                    columns[c].push_back(row[2 + c]);
            summaries.push_back(summarize(draws.columns, columns, draws.wall_time_s));
        }
        const ChainSummary agg_min = aggregate_min(summaries);
        const ChainSummary agg_mean = aggregate_mean(summaries);
        if (out.empty() || out == "-")
            write_summary(std::cout, summaries, agg_min, agg_mean);
        else
            write_summary(out, summaries, agg_min, agg_mean);
        return 0;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

// The config file has to be applied before the regular flags so that explicit
// flags win; scan for --config up front instead of making two CLI11 passes.
std::optional<std::string> find_config_flag(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    if (const std::optional<std::string> config = find_config_flag(argc, argv)) {
        try {
            merge_config_file(o, *config);
        } catch (const ParseError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return exit_usage;
        }
    }

    CLI::App app{"Importance-sampling transport-map HMC for state-space models"};
    app.require_subcommand(1);

    std::string config_path;  // consumed above; registered so CLI11 accepts it
    std::vector<std::string> summary_files;
    std::string summary_out = "-";

    const auto add_shared = [&](CLI::App* cmd) {
        cmd->add_option("--model", o.model, "sv | gamma | cev | wishart | lingauss");
        cmd->add_option("--seed", o.seed, "random seed");
        cmd->add_option("--config", config_path, "flat key = value configuration file");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic data file");
    add_shared(sim);
    sim->add_option("--D", o.series_len, "series length (default: model specific)");
    sim->add_option("--theta", o.theta_csv,
                    "comma-separated constrained parameter values (default: model specific)");
    sim->add_option("--rank", o.rank, "matrix dimension (wishart only)");
    sim->add_option("--out", o.out, "output data file");

    CLI::App* run = app.add_subcommand("run", "sample and write draws/summary files");
    add_shared(run);
    run->add_option("--map", o.map, "prior | laplace | fisher | eis");
    run->add_option("--K", o.newton_steps, "mode-refinement steps for the laplace map");
    run->add_option("--J", o.fit_sweeps, "eis fitting sweeps");
    run->add_option("--r", o.fit_paths, "eis fitting paths");
    run->add_option("--L", o.steps, "integrator steps per proposal");
    run->add_option("--eps", o.step_size, "step size (default: (pi/2)/L)");
    run->add_option("--iters", o.iters, "total iterations");
    run->add_option("--burnin", o.burnin, "burn-in iterations to discard");
    run->add_option("--replicas", o.replicas, "independent chains");
    run->add_option("--data", o.data, "input data file");
    run->add_option("--out", o.out, "output directory");

    CLI::App* sum = app.add_subcommand("summary", "recompute a summary from draws files");
    sum->add_option("files", summary_files, "draws files, one per replica")->required();
    sum->add_option("--out", summary_out, "output file ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        if (sim->parsed()) return cmd_simulate(o);
        if (run->parsed()) return cmd_run(o);
        return cmd_summary(summary_files, summary_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}
