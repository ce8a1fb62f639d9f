#include "castle/demo.hpp"
#include "castle/traj.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <random>
#include <sstream>

using namespace castle;

namespace {

Trajectory random_trajectory(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len(0, 30), dim(1, 6);
    std::uniform_int_distribution<std::uint32_t> act(0, 2);
    std::uniform_real_distribution<double> val(-1e3, 1e3);
    std::uniform_int_distribution<int> expo(-300, 300);
    const auto d = dim(rng);
    auto state = [&] {
        std::vector<double> v(d);
        for (auto& x : v) x = std::ldexp(val(rng), expo(rng) / 10);
        return EnvState(v);
    };
    Trajectory t;
    t.env = "cartpole";
    t.seed = rng();
    t.initial = state();
    for (std::size_t i = len(rng); i > 0; --i) t.steps.push_back({ActionId{act(rng)}, state()});
    t.terminal = rng() % 2 ? TerminalKind::goal : TerminalKind::bad;
    return t;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("castle_test_" + name);
}

} // namespace

TEST_CASE("trajectory round trip is lossless", "[traj]") {
    std::mt19937_64 rng(7);
    std::vector<Trajectory> ts;
    for (int i = 0; i < 200; ++i) ts.push_back(random_trajectory(rng));
    ts.back().initial = EnvState{0.1, -0.0, 5e-324, 1.7976931348623157e308};

    std::stringstream buf;
    write_trajectories(buf, ts);
    CHECK(read_trajectories(buf) == ts);

    const auto path = temp_file("roundtrip.jsonl").string();
    save_trajectories(path, ts);
    CHECK(load_trajectories(path) == ts);
    std::filesystem::remove(path);
}

TEST_CASE("empty trajectory file", "[traj]") {
    std::stringstream buf;
    write_trajectories(buf, {});
    CHECK(buf.str().empty());
    CHECK(read_trajectories(buf).empty());
}

TEST_CASE("malformed lines name their line number", "[traj]") {
    std::stringstream buf;
    buf << R"({"env":"cartpole","seed":1,"terminal":"bad","initial":[0.1],"steps":[[0,[0.2]]]})" << "\n";
    buf << "\n";
    buf << R"({"env":"cartpole","seed":1,"terminal":"bad","initial":[0.1],"steps":[[0,"x"]]})" << "\n";
    try {
        read_trajectories(buf);
        FAIL("no error");
    } catch (const parse_error& e) {
        CHECK(e.line() == 3);
        CHECK_THAT(e.what(), Catch::Matchers::StartsWith("line 3:"));
    }

    std::stringstream broken("{not json\n");
    CHECK_THROWS_AS(read_trajectories(broken), parse_error);
    std::stringstream missing(R"({"env":"cartpole","seed":1,"initial":[0.1],"steps":[]})");
    CHECK_THROWS_WITH(read_trajectories(missing), Catch::Matchers::ContainsSubstring("terminal"));
    std::stringstream kind(R"({"env":"cartpole","seed":1,"terminal":"maybe","initial":[0.1],"steps":[]})");
    CHECK_THROWS_AS(read_trajectories(kind), parse_error);
}

TEST_CASE("2500 mountain car episodes load quickly", "[traj]") {
    DemoConfig cfg;
    cfg.seed = 2;
    const auto demos = generate_demos(EnvId::mountain_car, cfg);
    const auto path = temp_file("mc2500.jsonl").string();
    save_trajectories(path, demos);
    const auto start = std::chrono::steady_clock::now();
    const auto loaded = load_trajectories(path);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(loaded == demos);
    CHECK(seconds < 5.0);
    std::filesystem::remove(path);
}

TEST_CASE("observation symbols are canonical label sets", "[traj]") {
    auto s = ObservationSymbol::from_labels({"goal", "c15", "goal"});
    CHECK(s.str() == "c15__goal");
    CHECK(s.is_goal());
    CHECK_FALSE(s.is_bad());
    CHECK(s.cluster() == std::optional<std::size_t>(15));
    CHECK(ObservationSymbol::parse("bad__c3").is_bad());
    CHECK(ObservationSymbol::init().is_init());
    CHECK_FALSE(ObservationSymbol::init().cluster());
    CHECK_THROWS(ObservationSymbol::parse("goal__c1"));
    CHECK_THROWS(ObservationSymbol::parse("c1____goal"));
    CHECK_THROWS(ObservationSymbol::from_labels({}));
}
