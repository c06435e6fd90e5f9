#include "rbsde/experiment.hpp"

#include "rbsde/backward_solver.hpp"
#include "rbsde/forward_sde.hpp"
#include "rbsde/game_analysis.hpp"
#include "rbsde/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace rbsde {

using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, ExperimentKind>>& experiment_table() {
    static const std::vector<std::pair<std::string, ExperimentKind>> table = {
        {"solve", ExperimentKind::solve},
        {"penalization", ExperimentKind::penalization},
        {"dpp", ExperimentKind::dpp},
        {"compare_wu", ExperimentKind::compare_wu},
        {"american_oracle", ExperimentKind::american_oracle},
        {"rbsde_oracle", ExperimentKind::rbsde_oracle},
    };
    return table;
}

std::string experiment_name(ExperimentKind kind) {
    for (const auto& [name, k] : experiment_table()) {
        if (k == kind) return name;
    }
    return "?";
}

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
    throw ConfigError("config field '" + field + "': " + what);
}

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) field_error(where, "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : obj.items()) {
        if (!allowed.count(k)) field_error(where.empty() ? k : where + "." + k, "unknown key");
    }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

double get_number(const json& obj, const std::string& where, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_number()) field_error(join(where, key), "expected a number");
    return v.get<double>();
}

long long get_integer(const json& obj, const std::string& where, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) field_error(join(where, key), "expected an integer");
    return v.get<long long>();
}

std::vector<double> get_numbers(const json& obj, const std::string& where, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_array()) field_error(join(where, key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) field_error(join(where, key), "expected an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<int> get_integers(const json& obj, const std::string& where, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_array()) field_error(join(where, key), "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) field_error(join(where, key), "expected an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

bool uses_grid(ExperimentKind k) { return k != ExperimentKind::rbsde_oracle; }

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [name, _] : experiment_table()) n.push_back(name);
        return n;
    }();
    return names;
}

ExperimentConfig config_from_json(const json& doc) {
    allow_keys(doc, "", {"experiment", "instance", "x0", "t", "grid", "mc", "schedules", "output"});
    ExperimentConfig c;

    if (!doc.contains("experiment") || !doc["experiment"].is_string()) {
        field_error("experiment", "required string");
    }
    const std::string exp = doc["experiment"].get<std::string>();
    bool found = false;
    for (const auto& [name, kind] : experiment_table()) {
        if (name == exp) {
            c.experiment = kind;
            found = true;
        }
    }
    if (!found) {
        std::string valid;
        for (const auto& n : experiment_names()) valid += (valid.empty() ? "" : ", ") + n;
        field_error("experiment", "unknown experiment '" + exp + "' (valid: " + valid + ")");
    }

    if (!doc.contains("instance")) field_error("instance", "required section");
    const json& inst = doc["instance"];
    allow_keys(inst, "instance", {"name", "params", "u_grid", "v_grid"});
    if (!inst.contains("name") || !inst["name"].is_string()) field_error("instance.name", "required string");
    c.instance.name = inst["name"].get<std::string>();
    builtin_defaults(c.instance.name);  // NotFoundError lists the valid names
    if (inst.contains("params")) {
        const json& p = inst["params"];
        if (!p.is_object()) field_error("instance.params", "expected an object");
        for (const auto& [k, v] : p.items()) {
            if (!v.is_number()) field_error("instance.params." + k, "expected a number");
            c.instance.params[k] = v.get<double>();
        }
    }
    if (inst.contains("u_grid")) c.instance.u_grid = get_numbers(inst, "instance", "u_grid");
    if (inst.contains("v_grid")) c.instance.v_grid = get_numbers(inst, "instance", "v_grid");

    if (doc.contains("x0")) c.x0 = get_numbers(doc, "", "x0");
    if (doc.contains("t")) c.t = get_number(doc, "", "t");

    if (doc.contains("grid")) {
        const json& g = doc["grid"];
        allow_keys(g, "grid", {"box", "nx", "nt", "boundary"});
        GridConfig grid;
        if (!g.contains("box") || !g["box"].is_array()) field_error("grid.box", "required array of [lo, hi]");
        for (const auto& side : g["box"]) {
            if (!side.is_array() || side.size() != 2 || !side[0].is_number() || !side[1].is_number()) {
                field_error("grid.box", "each entry must be [lo, hi]");
            }
            grid.box.emplace_back(side[0].get<double>(), side[1].get<double>());
        }
        if (!g.contains("nx")) field_error("grid.nx", "required");
        grid.nx = get_integers(g, "grid", "nx");
        if (g.contains("nt")) grid.nt = static_cast<int>(get_integer(g, "grid", "nt"));
        if (g.contains("boundary")) {
            const auto b = g["boundary"].is_string() ? g["boundary"].get<std::string>() : "";
            if (b == "linear_extrapolation") {
                grid.boundary = BoundaryPolicy::linear_extrapolation;
            } else if (b == "dirichlet_terminal_extension") {
                grid.boundary = BoundaryPolicy::dirichlet_terminal_extension;
            } else {
                field_error("grid.boundary", "expected linear_extrapolation or dirichlet_terminal_extension");
            }
        }
        if (grid.nx.size() != grid.box.size()) field_error("grid.nx", "needs one entry per box dimension");
        if (grid.nt < 0) field_error("grid.nt", "must be >= 0");
        c.grid = grid;
    } else if (uses_grid(c.experiment)) {
        field_error("grid", "required for experiment '" + exp + "'");
    }

    if (doc.contains("mc")) {
        const json& m = doc["mc"];
        allow_keys(m, "mc", {"paths", "steps", "seed", "degree"});
        McConfig mc;
        if (!m.contains("seed")) field_error("mc.seed", "required whenever mc is used");
        const long long seed = get_integer(m, "mc", "seed");
        if (seed < 0) field_error("mc.seed", "must be >= 0");
        mc.seed = static_cast<std::uint64_t>(seed);
        if (m.contains("paths")) {
            const long long p = get_integer(m, "mc", "paths");
            if (p < 1) field_error("mc.paths", "must be >= 1");
            mc.paths = static_cast<std::size_t>(p);
        }
        if (m.contains("steps")) {
            mc.steps = static_cast<int>(get_integer(m, "mc", "steps"));
            if (mc.steps < 1) field_error("mc.steps", "must be >= 1");
        }
        if (m.contains("degree")) {
            mc.degree = static_cast<int>(get_integer(m, "mc", "degree"));
            if (mc.degree < 0) field_error("mc.degree", "must be >= 0");
        }
        c.mc = mc;
    } else if (c.experiment == ExperimentKind::rbsde_oracle) {
        field_error("mc", "required for experiment 'rbsde_oracle'");
    }

    if (doc.contains("schedules")) {
        const json& s = doc["schedules"];
        allow_keys(s, "schedules", {"m", "delta", "nx"});
        if (s.contains("m")) c.schedules.m = get_numbers(s, "schedules", "m");
        if (s.contains("delta")) c.schedules.delta = get_numbers(s, "schedules", "delta");
        if (s.contains("nx")) c.schedules.nx = get_integers(s, "schedules", "nx");
    }

    if (doc.contains("output")) {
        const json& o = doc["output"];
        allow_keys(o, "output", {"directory", "formats", "dump_stride"});
        if (o.contains("directory")) {
            if (!o["directory"].is_string()) field_error("output.directory", "expected a string");
            c.output.directory = o["directory"].get<std::string>();
        }
        if (o.contains("formats")) {
            if (!o["formats"].is_array()) field_error("output.formats", "expected an array");
            c.output.csv = c.output.json = false;
            for (const auto& f : o["formats"]) {
                const std::string v = f.is_string() ? f.get<std::string>() : "";
                if (v == "csv") {
                    c.output.csv = true;
                } else if (v == "json") {
                    c.output.json = true;
                } else {
                    field_error("output.formats", "entries must be \"csv\" or \"json\"");
                }
            }
        }
        if (o.contains("dump_stride")) {
            c.output.dump_stride = static_cast<int>(get_integer(o, "output", "dump_stride"));
            if (c.output.dump_stride < 0) field_error("output.dump_stride", "must be >= 0");
        }
    }
    return c;
}

ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError("config parse error at line " + std::to_string(line) + ": " + e.what());
    }
    return config_from_json(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

json ExperimentConfig::canonical() const {
    json j;
    j["experiment"] = experiment_name(experiment);
    j["instance"]["name"] = instance.name;
    j["instance"]["params"] = json::object();
    for (const auto& [k, v] : instance.params) j["instance"]["params"][k] = v;
    if (instance.u_grid) j["instance"]["u_grid"] = *instance.u_grid;
    if (instance.v_grid) j["instance"]["v_grid"] = *instance.v_grid;
    if (x0) j["x0"] = *x0;
    j["t"] = t;
    if (grid) {
        json box = json::array();
        for (const auto& [lo, hi] : grid->box) box.push_back({lo, hi});
        j["grid"]["box"] = box;
        j["grid"]["nx"] = grid->nx;
        j["grid"]["nt"] = grid->nt;
        j["grid"]["boundary"] = grid->boundary == BoundaryPolicy::linear_extrapolation ? "linear_extrapolation"
                                                                                        : "dirichlet_terminal_extension";
    }
    if (mc) {
        j["mc"]["paths"] = mc->paths;
        j["mc"]["steps"] = mc->steps;
        j["mc"]["seed"] = mc->seed;
        j["mc"]["degree"] = mc->degree;
    }
    j["schedules"]["m"] = schedules.m;
    j["schedules"]["delta"] = schedules.delta;
    j["schedules"]["nx"] = schedules.nx;
    json formats = json::array();
    if (output.csv) formats.push_back("csv");
    if (output.json) formats.push_back("json");
    j["output"]["formats"] = formats;
    j["output"]["dump_stride"] = output.dump_stride;
    return j;
}

std::string config_digest(const ExperimentConfig& config) {
    const std::string s = config.canonical().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

json ResultRecord::to_json() const {
    json j;
    j["experiment"] = experiment;
    j["timestamp"] = timestamp;
    j["config_digest"] = config_digest;
    j["metrics"] = json::object();
    for (const auto& [k, v] : metrics) j["metrics"][k] = v;
    if (schedule) {
        j["schedule"] = {{"parameter", schedule->parameter},
                         {"metric", schedule->metric},
                         {"parameters", schedule->parameters},
                         {"values", schedule->values}};
    }
    j["field_files"] = field_files;
    return j;
}

GameInstance make_instance(const ExperimentConfig& config) {
    GameInstance g = builtin_instance(config.instance.name, config.instance.params);
    if (config.instance.u_grid || config.instance.v_grid) {
        ControlGrid u = config.instance.u_grid ? ControlGrid::scalar(*config.instance.u_grid, "u") : g.u_grid;
        ControlGrid v = config.instance.v_grid ? ControlGrid::scalar(*config.instance.v_grid, "v") : g.v_grid;
        g = with_control_grids(std::move(g), std::move(u), std::move(v));
    }
    return g;
}

SpaceTimeGrid make_grid(const ExperimentConfig& config, const GameInstance& instance) {
    if (!config.grid) throw ConfigError("config field 'grid': required");
    const GridConfig& gc = *config.grid;
    if (static_cast<int>(gc.box.size()) != instance.n) {
        throw ConfigError("config field 'grid.box': dimension differs from the instance state dimension");
    }
    const int nt = gc.nt > 0 ? gc.nt : min_cfl_steps(instance, gc.box, gc.nx);
    return SpaceTimeGrid(gc.box, gc.nx, nt, instance.T, gc.boundary);
}

void write_field_csv(const ValueField& field, const std::filesystem::path& path, int stride) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const auto& grid = field.grid();
    out << "t_index,flat_node_index";
    for (int j = 0; j < grid.dims(); ++j) out << ",x_" << j;
    out << ",value\n";
    out << std::setprecision(17);
    stride = std::max(stride, 1);
    for (int k = 0; k <= grid.nt(); ++k) {
        if (k % stride != 0 && k != grid.nt()) continue;
        const auto w = field.slice(k);
        for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
            out << k << ',' << flat;
            for (int j = 0; j < grid.dims(); ++j) out << ',' << grid.coordinate(flat, j);
            out << ',' << w[flat] << '\n';
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Vector point_of(const ExperimentConfig& c, const GameInstance& g) {
    if (c.x0) {
        if (static_cast<int>(c.x0->size()) != g.n) throw ConfigError("config field 'x0': wrong dimension");
        return Eigen::Map<const Vector>(c.x0->data(), g.n);
    }
    Vector x = Vector::Zero(g.n);
    if (c.grid) {
        for (int j = 0; j < g.n; ++j) x[j] = 0.5 * (c.grid->box[j].first + c.grid->box[j].second);
    }
    return x;
}

class Runner {
public:
    explicit Runner(const ExperimentConfig& c) : c_(c), g_(make_instance(c)) {
        rec_.experiment = experiment_name(c.experiment);
        rec_.timestamp = utc_timestamp();
        rec_.config_digest = config_digest(c);
    }

    ResultRecord run() {
        std::error_code ec;
        std::filesystem::create_directories(c_.output.directory, ec);
        if (ec) throw IoError("cannot create output directory " + c_.output.directory.string() + ": " + ec.message());
        switch (c_.experiment) {
            case ExperimentKind::solve: solve(); break;
            case ExperimentKind::penalization: penalization(); break;
            case ExperimentKind::dpp: dpp(); break;
            case ExperimentKind::compare_wu: compare_wu(); break;
            case ExperimentKind::american_oracle: american_oracle(); break;
            case ExperimentKind::rbsde_oracle: rbsde_oracle(); break;
        }
        write_outputs();
        return rec_;
    }

private:
    void dump(const ValueField& field, const std::string& name) {
        if (!c_.output.csv) return;
        const int stride = c_.output.dump_stride > 0 ? c_.output.dump_stride : std::max(1, field.grid().nt() / 50);
        write_field_csv(field, c_.output.directory / name, stride);
        rec_.field_files.push_back(name);
    }

    void grid_metrics(const SpaceTimeGrid& grid) {
        rec_.metrics["nt"] = grid.nt();
        rec_.metrics["dt"] = grid.dt();
        rec_.metrics["dx"] = grid.min_dx();
    }

    void solve() {
        const SpaceTimeGrid grid = make_grid(c_, g_);
        grid_metrics(grid);
        const Vector x0 = point_of(c_, g_);
        const ValueField w = lower_value(g_, grid);
        const ValueField u = upper_value(g_, grid);
        rec_.metrics["lower_at_x0"] = w.sample(0, x0);
        rec_.metrics["upper_at_x0"] = u.sample(0, x0);
        rec_.metrics["residual_lower"] = complementarity_residual(w, g_, kInteriorFraction).sup_residual;
        rec_.metrics["residual_upper"] = complementarity_residual(u, g_, kInteriorFraction).sup_residual;
        dump(w, "lower.csv");
        dump(u, "upper.csv");
    }

    void penalization() {
        const SpaceTimeGrid grid = make_grid(c_, g_);
        grid_metrics(grid);
        const std::vector<double> ms = c_.schedules.m.empty() ? std::vector<double>{1, 4, 16, 64, 256} : c_.schedules.m;
        const ConvergenceTable table = penalization_convergence(g_, grid, ms);
        rec_.metrics["monotone_ok"] = table.monotone_ok ? 1 : 0;
        rec_.metrics["max_monotone_violation"] = table.max_monotone_violation;
        rec_.metrics["max_order_violation"] = table.max_order_violation;
        rec_.metrics["gaps_nonincreasing"] = table.gaps_nonincreasing ? 1 : 0;
        rec_.metrics["final_gap"] = table.sup_gaps.back();
        rec_.schedule = ScheduleMetric{"m", "sup_gap", table.m_schedule, table.sup_gaps};
    }

    void dpp() {
        const SpaceTimeGrid grid = make_grid(c_, g_);
        grid_metrics(grid);
        const ValueField w = lower_value(g_, grid);
        const int k = static_cast<int>(std::lround(c_.t / grid.dt()));
        if (k < 0 || k > grid.nt()) throw ConfigError("config field 't': outside [0, T]");
        std::vector<double> deltas = c_.schedules.delta;
        if (deltas.empty()) deltas = {0.2 * g_.T, 0.1 * g_.T, 0.05 * g_.T, 0.025 * g_.T};
        ScheduleMetric sched{"delta", "max_residual", {}, {}};
        double worst = 0;
        for (double delta : deltas) {
            const int steps = static_cast<int>(std::lround(delta / grid.dt()));
            if (steps < 0 || k + steps > grid.nt()) throw ConfigError("config field 'schedules.delta': past the horizon");
            const DppReport r = dpp_residual(w, g_, k, steps);
            sched.parameters.push_back(delta);
            sched.values.push_back(r.max_residual);
            worst = std::max(worst, r.max_residual);
        }
        rec_.metrics["max_residual"] = worst;
        rec_.schedule = sched;

        if (c_.mc) {
            const int steps = static_cast<int>(std::lround(deltas.front() / grid.dt()));
            if (steps >= 1) {
                MonteCarloSettings mc{c_.mc->paths, c_.mc->steps, c_.mc->seed, RegressionBasis{c_.mc->degree}};
                const auto r = dpp_monte_carlo(w, g_, point_of(c_, g_), k, steps, mc);
                rec_.metrics["mc_value"] = r.mc_value;
                rec_.metrics["mc_grid_value"] = r.grid_value;
                rec_.metrics["mc_std_error"] = r.std_error;
                rec_.metrics["mc_tolerance"] = r.tolerance;
                rec_.metrics["mc_within"] = r.within ? 1 : 0;
            }
        }
    }

    void compare_wu() {
        const SpaceTimeGrid grid = make_grid(c_, g_);
        grid_metrics(grid);
        const ValueField w = lower_value(g_, grid);
        const ValueField u = upper_value(g_, grid);
        const ComparisonReport cmp = value_comparison(w, u);
        std::vector<HamiltonianSample> samples;
        for (int k : {0, grid.nt() / 2, grid.nt() - 1}) {
            auto s = field_samples(w, k);
            samples.insert(samples.end(), s.begin(), s.end());
        }
        const double gap = isaacs_gap(g_, samples);
        rec_.metrics["max_violation"] = cmp.max_violation;
        rec_.metrics["max_gap"] = cmp.max_gap;
        rec_.metrics["interior_sup_diff"] = cmp.interior_sup_diff;
        rec_.metrics["isaacs_gap"] = gap;
        rec_.metrics["value_tolerance"] = 10 * grid.min_dx();
        if (gap <= kIsaacsTolerance) {
            rec_.metrics["game_value_ok"] = cmp.interior_sup_diff <= 10 * grid.min_dx() ? 1 : 0;
        }
        dump(w, "lower.csv");
        dump(u, "upper.csv");
    }

    void american_oracle() {
        const auto need = [&](const char* key) {
            auto it = g_.params.find(key);
            if (it == g_.params.end()) {
                throw ConfigError("experiment 'american_oracle' needs an instance with parameter '" +
                                  std::string(key) + "'");
            }
            return it->second;
        };
        const double r = need("r"), sigma = need("sigma"), strike = need("strike");
        const Vector x0 = c_.x0 ? point_of(c_, g_) : Vector::Constant(1, strike);
        const double reference = crr_american_put(x0[0], strike, r, sigma, g_.T, 2000);
        rec_.metrics["binomial_value"] = reference;

        std::vector<int> nxs = c_.schedules.nx;
        if (nxs.empty()) nxs = {c_.grid->nx.front()};
        ScheduleMetric sched{"nx", "rel_error", {}, {}};
        for (int nx : nxs) {
            ExperimentConfig cc = c_;
            cc.grid->nx = {nx};
            cc.grid->nt = 0;
            const SpaceTimeGrid grid = make_grid(cc, g_);
            const ValueField w = lower_value(g_, grid);
            const double v = w.sample(0, x0);
            const double err = std::abs(v - reference) / reference;
            sched.parameters.push_back(nx);
            sched.values.push_back(err);
            rec_.metrics["pde_value_nx" + std::to_string(nx)] = v;
            rec_.metrics["nt_nx" + std::to_string(nx)] = grid.nt();
        }
        rec_.metrics["rel_error"] = sched.values.back();
        rec_.schedule = sched;
    }

    void rbsde_oracle() {
        const McConfig& mc = *c_.mc;
        const Vector x0 = c_.x0 ? point_of(c_, g_) : Vector::Zero(g_.n);
        const TimeMesh mesh(0.0, g_.T, mc.steps);
        const PathBundle bundle =
            simulate_paths(g_, x0, mesh, ControlPath::constant(0), ControlPath::constant(0), mc.paths, mc.seed);
        std::vector<double> terminal(mc.paths);
        for (std::size_t i = 0; i < mc.paths; ++i) terminal[i] = g_.terminal(bundle.state(i, mesh.steps()));
        const BackwardSolution sol = solve_reflected(g_, bundle, terminal, RegressionBasis{mc.degree});
        rec_.metrics["y0"] = sol.y0();
        rec_.metrics["std_error"] = sol.y0_std_error();
        double sk = 0;
        for (double s : skorokhod_sums(sol)) sk = std::max(sk, s);
        rec_.metrics["max_skorokhod_sum"] = sk;
        if (c_.instance.name == "lemma45") {
            const double closed = lemma45_closed_form(g_.params.at("C"), g_.params.at("theta"), 0.0, g_.T);
            rec_.metrics["closed_form"] = closed;
            rec_.metrics["abs_error"] = std::abs(sol.y0() - closed);
        }
    }

    void write_outputs() {
        const auto& dir = c_.output.directory;
        if (c_.output.json) {
            std::ofstream cfg(dir / "config.json");
            std::ofstream met(dir / "metrics.json");
            if (!cfg || !met) throw IoError("cannot write into " + dir.string());
            cfg << c_.canonical().dump(2) << '\n';
            met << rec_.to_json().dump(2) << '\n';
        }
        if (rec_.schedule && rec_.schedule->values.size() >= 2) {
            const ConvergenceText table = emit_convergence_table(rec_);
            std::ofstream txt(dir / "convergence.txt");
            if (!txt) throw IoError("cannot write into " + dir.string());
            txt << table.text;
            if (c_.output.csv) {
                std::ofstream csv(dir / "convergence.csv");
                if (!csv) throw IoError("cannot write into " + dir.string());
                csv << table.csv;
            }
        }
    }

    const ExperimentConfig& c_;
    GameInstance g_;
    ResultRecord rec_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

ResultRecord run(const ExperimentConfig& config) { return Runner(config).run(); }

ConvergenceText emit_convergence_table(const ResultRecord& record) {
    if (!record.schedule) throw Error("record has no schedule metric; empty table");
    const ScheduleMetric& s = *record.schedule;
    if (s.values.size() < 2) throw Error("need >= 2 schedule points");

    std::vector<std::array<std::string, 3>> rows;
    std::ostringstream csv;
    csv << s.parameter << ',' << s.metric << ",ratio\n";
    csv << std::setprecision(17);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        std::string ratio = "-";
        csv << s.parameters[i] << ',' << s.values[i] << ',';
        if (i > 0 && s.values[i - 1] != 0.0) {
            const double r = s.values[i] / s.values[i - 1];
            ratio = fmt(r);
            csv << r;
        }
        csv << '\n';
        rows.push_back({fmt(s.parameters[i]), fmt(s.values[i]), ratio});
    }
    std::array<std::size_t, 3> width = {s.parameter.size(), s.metric.size(), 5};
    for (const auto& r : rows) {
        for (int c = 0; c < 3; ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream text;
    auto line = [&](const std::array<std::string, 3>& cells) {
        for (int c = 0; c < 3; ++c) {
            text << std::setw(static_cast<int>(width[c])) << cells[c] << (c < 2 ? "  " : "\n");
        }
    };
    line({s.parameter, s.metric, "ratio"});
    for (const auto& r : rows) line(r);
    return {text.str(), csv.str()};
}

}  // namespace rbsde
