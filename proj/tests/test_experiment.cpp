#include "rbsde/experiment.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace rbsde;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kGolden = RBSDE_GOLDEN_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("rbsde-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    return dir;
}

ExperimentConfig golden_config(const std::string& name) {
    ExperimentConfig c = load_config(kGolden / (name + ".json"));
    c.output.directory = scratch(name);
    return c;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(RBSDE_LAB_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_temp(const std::string& name, const std::string& text) {
    const fs::path dir = scratch("configs");
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("golden metrics for every experiment") {
    const bool update = std::getenv("RBSDE_UPDATE_GOLDEN") != nullptr;
    for (const auto& name : experiment_names()) {
        CAPTURE(name);
        const ExperimentConfig config = golden_config(name);
        const ResultRecord record = run(config);
        const json got = record.to_json();
        const fs::path expected_path = kGolden / (name + ".expected.json");
        if (update) {
            json e;
            e["metrics"] = got["metrics"];
            if (got.contains("schedule")) e["schedule"] = got["schedule"];
            e["config_digest"] = got["config_digest"];
            std::ofstream(expected_path) << e.dump(2) << '\n';
            continue;
        }
        REQUIRE(fs::exists(expected_path));
        const json expected = json::parse(slurp(expected_path));
        CHECK(got["config_digest"] == expected["config_digest"]);
        REQUIRE(got["metrics"].size() == expected["metrics"].size());
        for (const auto& [key, value] : expected["metrics"].items()) {
            CAPTURE(key);
            REQUIRE(got["metrics"].contains(key));
            CHECK(close(got["metrics"][key].get<double>(), value.get<double>()));
        }
        CHECK(got.contains("schedule") == expected.contains("schedule"));
        if (expected.contains("schedule")) {
            const auto& gv = got["schedule"]["values"];
            const auto& ev = expected["schedule"]["values"];
            REQUIRE(gv.size() == ev.size());
            for (std::size_t i = 0; i < ev.size(); ++i) CHECK(close(gv[i].get<double>(), ev[i].get<double>()));
        }
        CHECK(fs::exists(config.output.directory / "metrics.json"));
        CHECK(fs::exists(config.output.directory / "config.json"));
        for (const auto& f : record.field_files) CHECK(fs::exists(config.output.directory / f));
    }
}

TEST_CASE("experiment metrics carry the documented checks") {
    {
        const auto r = run(golden_config("compare_wu"));
        CHECK(r.metrics.at("max_violation") <= 1e-12);
        CHECK(r.metrics.at("max_gap") > 0.0);
    }
    {
        const auto r = run(golden_config("rbsde_oracle"));
        CHECK(std::abs(r.metrics.at("y0") - (-0.31606027941427883)) <= 1e-3);
        CHECK(r.metrics.at("abs_error") <= 1e-3);
    }
    {
        const auto r = run(golden_config("penalization"));
        CHECK(r.metrics.at("monotone_ok") == 1.0);
        CHECK(r.metrics.at("final_gap") <= 0.02);
    }
    {
        const auto r = run(golden_config("american_oracle"));
        REQUIRE(r.schedule);
        CHECK(r.schedule->values[1] < r.schedule->values[0]);
    }
}

TEST_CASE("reruns reproduce every metric bit for bit") {
    for (const char* name : {"dpp", "rbsde_oracle", "solve"}) {
        CAPTURE(name);
        const auto a = run(golden_config(name));
        const auto b = run(golden_config(name));
        CHECK(a.metrics == b.metrics);
        CHECK(a.config_digest == b.config_digest);
    }
}

TEST_CASE("field dump format") {
    const auto config = golden_config("solve");
    const auto record = run(config);
    REQUIRE(!record.field_files.empty());
    std::ifstream in(config.output.directory / record.field_files.front());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "t_index,flat_node_index,x_0,value");
    CHECK(row.rfind("0,0,20,", 0) == 0);
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows > 0);
}

TEST_CASE("convergence tables") {
    ResultRecord r;
    r.schedule = ScheduleMetric{"m", "sup_gap", {1, 4, 16}, {0.1, 0.03, 0.01}};
    const auto t = emit_convergence_table(r);
    std::istringstream csv(t.csv);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "m,sup_gap,ratio");
    std::getline(csv, line);
    CHECK(line == "1,0.10000000000000001,");
    std::getline(csv, line);
    CHECK(std::stod(line.substr(line.rfind(',') + 1)) == doctest::Approx(0.3));
    std::getline(csv, line);
    CHECK(std::stod(line.substr(line.rfind(',') + 1)) == doctest::Approx(1.0 / 3.0));
    CHECK(t.text.find("0.333333") != std::string::npos);

    ResultRecord single;
    single.schedule = ScheduleMetric{"delta", "max_residual", {0.1}, {0.0}};
    try {
        emit_convergence_table(single);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()) == "need >= 2 schedule points");
    }
    CHECK_THROWS_AS(emit_convergence_table(ResultRecord{}), Error);
}

TEST_CASE("config parsing errors name the line or the field") {
    try {
        parse_config("{\n  \"experiment\": \"solve\",\n  \"instance\": {,}\n}");
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    try {
        parse_config(R"({"experiment":"solve","instance":{"name":"american_put"},"grid":{"box":[[0,1]],"nx":[5],"nz":1}})");
        FAIL("expected an unknown-key error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("grid.nz") != std::string::npos);
    }
    try {
        parse_config(R"({"experiment":"solve","instance":{"name":"nope"},"grid":{"box":[[0,1]],"nx":[5]}})");
        FAIL("expected not-found");
    } catch (const NotFoundError& e) {
        CHECK(std::string(e.what()).find("american_put") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"experiment":"rbsde_oracle","instance":{"name":"lemma45"},"mc":{"paths":1}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment":"explode","instance":{"name":"lemma45"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment":"solve","instance":{"name":"lemma45"}})"), ConfigError);
    CHECK_THROWS_AS(
        run(parse_config(R"({"experiment":"solve","instance":{"name":"lemma45","params":{"zeta":1}},"grid":{"box":[[0,1]],"nx":[5]}})")),
        ConfigError);
}

TEST_CASE("config digest is stable and ignores the output directory") {
    auto a = golden_config("dpp");
    auto b = golden_config("dpp");
    b.output.directory = "elsewhere";
    CHECK(config_digest(a) == config_digest(b));
    CHECK(config_digest(a).size() == 16);
    b.mc->seed = 4;
    CHECK(config_digest(a) != config_digest(b));
    const auto reparsed = config_from_json(a.canonical());
    CHECK(config_digest(reparsed) == config_digest(a));
}

TEST_CASE("command line exit codes") {
    CHECK(run_cli("list-instances") == 0);
    const fs::path out = scratch("cli");
    CHECK(run_cli("run " + (kGolden / "rbsde_oracle.json").string() + " --output " + out.string() + " --threads 2") ==
          0);
    CHECK(fs::exists(out / "metrics.json"));
    CHECK(run_cli("validate " + (kGolden / "solve.json").string()) == 0);

    const auto unknown = write_temp("unknown.json", R"({"experiment":"solve","instance":{"name":"nope"},"grid":{"box":[[0,1]],"nx":[5]}})");
    CHECK(run_cli("run " + unknown.string()) == 2);
    const auto cfl = write_temp(
        "cfl.json", R"({"experiment":"solve","instance":{"name":"american_put"},"grid":{"box":[[20,300]],"nx":[141],"nt":10}})");
    CHECK(run_cli("run " + cfl.string() + " --output " + scratch("cfl").string()) == 3);
    CHECK(run_cli("validate " + cfl.string()) == 3);
    CHECK(run_cli("run /nonexistent/config.json") == 4);
    const auto blocked = write_temp("blocked", "not a directory");
    CHECK(run_cli("run " + (kGolden / "rbsde_oracle.json").string() + " --output " + (blocked / "sub").string()) == 4);
    CHECK(run_cli("frobnicate") == 2);
}
