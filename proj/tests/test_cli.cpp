#include <catch_amalgamated.hpp>

#include <sstream>

#include "semiqed/commands.hpp"

using namespace semiqed;
namespace fs = std::filesystem;
using io::json;

namespace {

const fs::path source_dir{SEMIQED_SOURCE_DIR};

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "semiqed_cli_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json load_config(const std::string& name) { return io::parse(io::read_file(source_dir / "configs" / (name + ".json"))); }

fs::path write_config(const fs::path& dir, const json& cfg) {
    const fs::path p = dir / "config.json";
    io::write_atomic(p, io::dump(cfg));
    return p;
}

struct Outcome {
    int status;
    json report;
    fs::path out;
    std::string log;
};

Outcome run_cli(const std::string& command, const fs::path& config, const fs::path& out,
                std::optional<std::uint64_t> seed = std::nullopt) {
    std::ostringstream log;
    const int status = cli::run({command, config, out, seed}, log);
    return {status, io::parse(io::read_file(out / "report.json")), out, log.str()};
}

Outcome run_sample(const std::string& name, const std::string& tag = "a") {
    const auto cfg = load_config(name);
    const fs::path out = scratch(name + "_" + tag);
    return run_cli(cfg.at("command").get<std::string>(), source_dir / "configs" / (name + ".json"), out);
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::size_t columns(const std::string& line) { return std::size_t(std::count(line.begin(), line.end(), ',')) + 1; }

} // namespace

TEST_CASE("sample configs run and pass", "[cli]") {
    for (const char* name : {"build_modes_synthetic", "build_modes_computed", "expand_larmor", "expand_weak", "compare_zero",
                             "compare_weak", "transition_zero", "transition_weak"}) {
        INFO(name);
        const auto o = run_sample(name);
        CHECK(o.status == 0);
        CHECK(o.report.at("status") == "passed");
        CHECK(o.report.at("failed_checks").empty());
        CHECK(o.report.at("failure_stage").is_null());
        CHECK(o.report.at("schema_version") == cli::report_schema_version);
        for (const auto& a : o.report.at("artifacts")) CHECK(fs::exists(o.out / a.get<std::string>()));
    }
}

TEST_CASE("outputs are byte-identical across runs", "[cli]") {
    for (const char* name : {"build_modes_computed", "expand_weak", "compare_zero", "transition_weak"}) {
        INFO(name);
        const auto a = run_sample(name, "first");
        const auto b = run_sample(name, "second");
        REQUIRE(a.status == 0);
        const auto arts = a.report.at("artifacts");
        REQUIRE(arts == b.report.at("artifacts"));
        for (const auto& f : arts) {
            const auto file = f.get<std::string>();
            CHECK(io::read_file(a.out / file) == io::read_file(b.out / file));
        }
        CHECK(io::read_file(a.out / "report.json") == io::read_file(b.out / "report.json"));
    }
}

TEST_CASE("build-modes artifacts", "[cli]") {
    SECTION("computed model") {
        const auto o = run_sample("build_modes_computed");
        const auto rows = lines(io::read_file(o.out / "decay_table.csv"));
        REQUIRE(rows.size() == 5);
        CHECK(rows[0] == "k,m,n,ell,family,member,coefficient,weight,weighted");
        for (const auto& r : rows) CHECK(columns(r) == 9);
        const auto back = modes::deserialize(io::read_file(o.out / "model.json"));
        CHECK(back.n_modes() == 4);
        CHECK(modes::serialize(back) == io::read_file(o.out / "model.json"));
        CHECK(o.report.at("results").at("decay").contains("max_weighted"));
    }
    SECTION("synthetic model has a header-only decay table") {
        const auto o = run_sample("build_modes_synthetic");
        CHECK(lines(io::read_file(o.out / "decay_table.csv")).size() == 1);
        CHECK(o.report.at("checks").empty());
    }
}

TEST_CASE("hierarchy CSV width follows the order", "[cli]") {
    const fs::path dir = scratch("expand_orders");
    auto cfg = load_config("expand_weak");
    std::vector<std::size_t> width;
    for (int order : {0, 1}) {
        cfg["order"] = order;
        const auto o = run_cli("expand", write_config(dir, cfg), dir / ("out" + std::to_string(order)));
        REQUIRE(o.status == 0);
        const auto rows = lines(io::read_file(o.out / "hierarchy.csv"));
        REQUIRE(rows.size() == 22);
        width.push_back(columns(rows[0]));
        for (const auto& r : rows) CHECK(columns(r) == width.back());
    }
    // one spin: 2x2 blocks, real and imaginary parts, plus t
    CHECK(width[0] == 1 + 8);
    CHECK(width[1] == 1 + 16);
}

TEST_CASE("errors map to exit status 2 with a failure stage", "[cli]") {
    SECTION("invalid cutoff") {
        const auto o = run_sample("build_modes_invalid_cutoff");
        CHECK(o.status == 2);
        CHECK(o.report.at("status") == "error");
        CHECK(o.report.at("failure_stage") == "model");
        CHECK(o.report.at("error").get<std::string>().find("chi must vanish on a neighborhood of 0") != std::string::npos);
        CHECK(o.log.find("chi must vanish") != std::string::npos);
    }
    SECTION("command mismatch") {
        const auto o = run_cli("expand", source_dir / "configs" / "compare_weak.json", scratch("mismatch"));
        CHECK(o.status == 2);
        CHECK(o.report.at("failure_stage") == "config");
        CHECK(o.report.at("error").get<std::string>().find("compare") != std::string::npos);
    }
    SECTION("unknown command") {
        const auto o = run_cli("frobnicate", source_dir / "configs" / "expand_weak.json", scratch("unknown"));
        CHECK(o.status == 2);
    }
    SECTION("negative tolerance") {
        const fs::path dir = scratch("negative_tol");
        auto cfg = load_config("expand_weak");
        cfg["tolerances"] = {{"unitarity_drift", -1.0}};
        const auto o = run_cli("expand", write_config(dir, cfg), dir / "out");
        CHECK(o.status == 2);
        CHECK(o.report.at("failure_stage") == "config");
    }
    SECTION("malformed JSON") {
        const fs::path dir = scratch("malformed");
        io::write_atomic(dir / "config.json", "{\"command\": \"expand\",");
        const auto o = run_cli("expand", dir / "config.json", dir / "out");
        CHECK(o.status == 2);
        CHECK(o.report.at("error").is_string());
    }
    SECTION("wrong phase point length") {
        const fs::path dir = scratch("bad_point");
        auto cfg = load_config("expand_weak");
        cfg["point"] = {0.1, 0.2, 0.3};
        const auto o = run_cli("expand", write_config(dir, cfg), dir / "out");
        CHECK(o.status == 2);
        CHECK(o.report.at("failure_stage") == "hierarchy");
    }
    SECTION("truncation too coarse") {
        const fs::path dir = scratch("truncation");
        auto cfg = load_config("compare_weak");
        cfg["truncation"] = {{"n_max", 6}, {"n_max_check", 12}};
        const auto o = run_cli("compare", write_config(dir, cfg), dir / "out");
        CHECK(o.status == 2);
        CHECK(o.report.at("failure_stage") == "truncation");
    }
}

TEST_CASE("a zero tolerance fails only that check", "[cli]") {
    const fs::path dir = scratch("zero_tol");
    auto cfg = load_config("expand_larmor");
    cfg["tolerances"] = {{"larmor", 0.0}};
    const auto o = run_cli("expand", write_config(dir, cfg), dir / "out");
    CHECK(o.status == 1);
    CHECK(o.report.at("status") == "failed");
    CHECK(o.report.at("failure_stage") == "checks");
    CHECK(o.report.at("failed_checks") == json::array({"larmor"}));
    for (const auto& c : o.report.at("checks"))
        if (c.at("name") != "larmor") CHECK(c.at("passed") == true);
    CHECK(fs::exists(o.out / "hierarchy.csv"));
}

TEST_CASE("seed and output overrides", "[cli]") {
    const fs::path dir = scratch("seed");
    const fs::path config = source_dir / "configs" / "compare_zero.json";
    const auto a = run_cli("compare", config, dir / "a", 11);
    const auto b = run_cli("compare", config, dir / "b", 12);
    const auto c = run_cli("compare", config, dir / "c", 11);
    CHECK(a.report.at("seed") == 11);
    CHECK(b.report.at("seed") == 12);
    CHECK(io::read_file(a.out / "report.json") == io::read_file(c.out / "report.json"));
    CHECK(a.report.at("results") != b.report.at("results"));

    auto cfg = load_config("expand_weak");
    cfg["out"] = "relative_out";
    const auto o = run_cli("expand", write_config(dir, cfg), dir / "explicit");
    CHECK(fs::exists(dir / "explicit" / "report.json"));
    CHECK_FALSE(fs::exists(dir / "relative_out"));
    std::ostringstream log;
    CHECK(cli::run({"expand", write_config(dir, cfg), std::nullopt, std::nullopt}, log) == 0);
    CHECK(fs::exists(dir / "relative_out" / "hierarchy.csv"));
}

TEST_CASE("model files are accepted in place of inline models", "[cli]") {
    const auto built = run_sample("build_modes_synthetic", "for_model_file");
    const fs::path dir = scratch("model_file");
    fs::copy_file(built.out / "model.json", dir / "model.json");
    auto inline_cfg = load_config("expand_weak");
    auto file_cfg = inline_cfg;
    file_cfg.erase("model");
    file_cfg["model_file"] = "model.json";
    const auto a = run_cli("expand", write_config(dir, file_cfg), dir / "from_file");
    const auto b = run_cli("expand", source_dir / "configs" / "expand_weak.json", dir / "inline");
    REQUIRE(a.status == 0);
    CHECK(io::read_file(a.out / "hierarchy.csv") == io::read_file(b.out / "hierarchy.csv"));
}

TEST_CASE("compare reports exact agreement at zero coupling", "[cli]") {
    const auto o = run_sample("compare_zero");
    const auto& r = o.report.at("results").at("compare");
    CHECK(r.at("exact") == true);
    for (const auto& c : o.report.at("checks"))
        if (c.at("name") != "truncation") CHECK(c.at("comparison") == "exact");
    const auto rows = lines(io::read_file(o.out / "compare.csv"));
    CHECK(rows[0] == "h,err_order0,err_order1,tail");
    CHECK(rows.size() == 5);
}
