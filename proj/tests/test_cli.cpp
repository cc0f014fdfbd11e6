#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
};

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "fwplab_cli_test";
    fs::create_directories(dir);
    return dir;
}

RunResult run(const std::string& args) {
    const std::string cmd = std::string(FWPLAB_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("equiv passes and writes a parseable JSON report") {
    const fs::path dir = scratch_dir() / "equiv";
    write_file(scratch_dir() / "equiv.json", R"({"seeds": 3})");
    const RunResult r =
        run("equiv --config " + (scratch_dir() / "equiv.json").string() + " --seed 1 --out " +
            dir.string());
    CHECK(r.exit_code == 0);
    const json report = json::parse(slurp(dir / "equiv_report.json"));
    CHECK(report.size() >= 5);
    for (const json& row : report) {
        CHECK(row.at("pass").get<bool>());
        CHECK(row.at("max_diff").get<double>() < row.at("tol").get<double>());
    }
}

TEST_CASE("an injected fault fails with the offending pair named") {
    const fs::path dir = scratch_dir() / "equiv_fault";
    write_file(scratch_dir() / "fault.json",
               R"({"seeds": 2, "fault_pair": "chunk_vs_recurrent_additive"})");
    const RunResult r =
        run("equiv --config " + (scratch_dir() / "fault.json").string() + " --out " +
            dir.string());
    CHECK(r.exit_code == 4);
    const json report = json::parse(slurp(dir / "equiv_report.json"));
    bool found = false;
    for (const json& row : report)
        if (row.at("pair") == "chunk_vs_recurrent_additive") {
            found = true;
            CHECK_FALSE(row.at("pass").get<bool>());
        } else {
            CHECK(row.at("pass").get<bool>());
        }
    CHECK(found);
}

TEST_CASE("config errors exit with code 2") {
    CHECK(run("equiv --config /nonexistent.json").exit_code == 2);
    write_file(scratch_dir() / "badkey.json", R"({"seeds": 2, "bogus": true})");
    CHECK(run("equiv --config " + (scratch_dir() / "badkey.json").string()).exit_code == 2);
    write_file(scratch_dir() / "notjson.json", "{{{");
    CHECK(run("equiv --config " + (scratch_dir() / "notjson.json").string()).exit_code == 2);
    CHECK(run("frobnicate").exit_code == 2);
    CHECK(run("train").exit_code == 2);  // missing config sections
}

TEST_CASE("datagen is byte-identical across runs with one seed") {
    const fs::path dir1 = scratch_dir() / "dg1";
    const fs::path dir2 = scratch_dir() / "dg2";
    write_file(scratch_dir() / "dg.json",
               R"({"task": {"kind": "modadd", "modulus": 5, "L_min": 2, "L_max": 9}, "n": 40})");
    const std::string cfg = (scratch_dir() / "dg.json").string();
    CHECK(run("datagen --config " + cfg + " --seed 12 --out " + dir1.string()).exit_code == 0);
    CHECK(run("datagen --config " + cfg + " --seed 12 --out " + dir2.string()).exit_code == 0);
    const std::string a = slurp(dir1 / "data.jsonl");
    CHECK(a == slurp(dir2 / "data.jsonl"));
    CHECK(a.find("\"tokens\"") != std::string::npos);
    // every line is standalone JSON
    std::stringstream ss(a);
    std::string line;
    int lines = 0;
    while (std::getline(ss, line)) {
        CHECK_NOTHROW(json::parse(line));
        ++lines;
    }
    CHECK(lines == 40);
}

TEST_CASE("construct reports PASS and exits zero") {
    const fs::path dir = scratch_dir() / "construct";
    write_file(scratch_dir() / "con.json", R"({"which": "all", "n_problems": 10})");
    const RunResult r = run("construct --config " + (scratch_dir() / "con.json").string() +
                            " --seed 4 --out " + dir.string());
    CHECK(r.exit_code == 0);
    const json report = json::parse(slurp(dir / "construct_report.json"));
    CHECK(report.at("gd").at("pass").get<bool>());
    CHECK(report.at("parity").at("pass").get<bool>());
    CHECK(report.at("memory").at("pass").get<bool>());
}

TEST_CASE("train writes metrics with a monotone step column and a loadable checkpoint") {
    const fs::path dir = scratch_dir() / "train";
    write_file(scratch_dir() / "train.json", R"({
      "model": {"d_in": 3, "d_model": 8, "n_blocks": 1, "n_out": 2,
                "mixer": "fwp", "rule": "delta", "phi": "silu_l2norm", "heads": 2},
      "train": {"task": {"kind": "parity", "L_min": 2, "L_max": 8},
                "steps": 8, "batch_size": 8, "eval_samples": 20, "eval_lengths": [8]}
    })");
    const RunResult r = run("train --config " + (scratch_dir() / "train.json").string() +
                            " --seed 2 --out " + dir.string());
    CHECK(r.exit_code == 0);
    const std::string csv = slurp(dir / "metrics.csv");
    REQUIRE(csv.rfind("step,split,loss,accuracy,seq_len_bucket\n", 0) == 0);
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // header
    long prev = -1;
    while (std::getline(ss, line)) {
        const long step = std::stol(line.substr(0, line.find(',')));
        CHECK(step >= prev);
        prev = step;
    }
    CHECK(fs::exists(dir / "checkpoint.json"));
    CHECK_NOTHROW(json::parse(slurp(dir / "checkpoint.json")));
}

TEST_CASE("numeric divergence exits with code 3") {
    const fs::path dir = scratch_dir() / "diverge";
    write_file(scratch_dir() / "div.json", R"({
      "model": {"d_in": 3, "d_model": 8, "n_blocks": 1, "n_out": 2,
                "mixer": "fwp", "rule": "delta", "heads": 1},
      "train": {"task": {"kind": "parity", "L_min": 2, "L_max": 8},
                "steps": 5, "batch_size": 4, "eval_samples": 10,
                "eval_lengths": [8], "lr": 1e200}
    })");
    const RunResult r = run("train --config " + (scratch_dir() / "div.json").string() +
                            " --out " + dir.string());
    CHECK(r.exit_code == 3);
}

TEST_CASE("bench self-checks its forms and emits the pinned CSV header") {
    const fs::path dir = scratch_dir() / "bench";
    const RunResult r =
        run("bench --T 64 --S 8 --d 8 --reps 2 --seed 5 --out " + dir.string());
    CHECK(r.exit_code == 0);
    const std::string csv = slurp(dir / "bench.csv");
    CHECK(csv.rfind(
              "form,rule,T,S,d_key,d_out,heads,median_ns,p10_ns,p90_ns,max_abs_diff_vs_recurrent\n",
              0) == 0);
    CHECK(csv.find("recurrent,additive") != std::string::npos);
    CHECK(csv.find("chunkwise,additive") != std::string::npos);
    CHECK(csv.find("quadratic,additive") != std::string::npos);
    CHECK(csv.find("recurrent,retnet") != std::string::npos);
}

TEST_CASE("FWPLAB_THREADS caps the worker pool without changing results") {
    const fs::path dir1 = scratch_dir() / "threads1";
    const fs::path dir4 = scratch_dir() / "threads4";
    auto run_env = [](const std::string& env, const std::string& args) {
        const std::string cmd = env + " " + FWPLAB_BIN + " " + args + " > /dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    write_file(scratch_dir() / "dgt.json",
               R"({"task": {"kind": "parity", "L_min": 2, "L_max": 8}, "n": 20})");
    const std::string cfg = (scratch_dir() / "dgt.json").string();
    CHECK(run_env("FWPLAB_THREADS=1",
                  "datagen --config " + cfg + " --seed 3 --out " + dir1.string()) == 0);
    CHECK(run_env("FWPLAB_THREADS=4",
                  "datagen --config " + cfg + " --seed 3 --out " + dir4.string()) == 0);
    CHECK(slurp(dir1 / "data.jsonl") == slurp(dir4 / "data.jsonl"));
}
