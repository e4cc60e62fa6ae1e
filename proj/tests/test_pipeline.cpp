#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "flq/core/rng.hpp"
#include "flq/io/snapshot.hpp"
#include "flq/pipeline/config.hpp"
#include "flq/pipeline/stages.hpp"

using namespace flq;
using namespace flq::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

} // namespace

TEST_CASE("defaults carry the full study regime") {
    const auto cfg = load_config("");
    CHECK(cfg.grid_nx == 256);
    CHECK(cfg.grid_ny == 64);
    CHECK(cfg.cylinder_radius == 16.0);
    CHECK(cfg.reynolds == 500.0);
    CHECK(cfg.snapshot_count == 1999);
    CHECK(cfg.codebook_size == 128);
    CHECK(cfg.latent_dim == 7);
    CHECK(cfg.vqvae_beta == 0.2);
    CHECK(cfg.vqvae_epochs == 50);
    CHECK(cfg.vqvae_batch == 32);
    CHECK(cfg.vqvae_lr == 0.0005);
    CHECK(cfg.qcbm_iters == 100);
    CHECK(cfg.qcbm_lr == 0.1);
    CHECK(cfg.qgan_epochs == 2);
    CHECK(cfg.qgan_batch == 32);
    CHECK(cfg.qgan_lr == 0.01);
    CHECK(cfg.lstm_epochs == 100);
    CHECK(cfg.tsne_perplexity == 100.0);
    // 0.1 Mach at lattice sound speed 1/sqrt(3)
    CHECK(cfg.resolved_inlet_velocity() == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-15));
    // tau = 3 u D / Re + 1/2
    CHECK(cfg.tau() ==
          doctest::Approx(3.0 * cfg.resolved_inlet_velocity() * 32.0 / 500.0 + 0.5)
              .epsilon(1e-15));
}

TEST_CASE("an empty config file keeps every default") {
    TempDir dir("flq_cfg_empty");
    write_file(dir.file("empty.cfg"), "# nothing but comments\n\n");
    const auto cfg = load_config(dir.file("empty.cfg"));
    CHECK(cfg.grid_nx == 256);
    CHECK(cfg.snapshot_count == 1999);
    CHECK(cfg.master_seed == 42);
}

TEST_CASE("reynolds override re-derives tau and validates it") {
    const auto cfg = load_config("", {{"reynolds", "250"}});
    CHECK(cfg.tau() ==
          doctest::Approx(3.0 * cfg.resolved_inlet_velocity() * 32.0 / 250.0 + 0.5));
    // A negative Reynolds number drives tau below the stability bound.
    CHECK_THROWS_AS(load_config("", {{"reynolds", "-50"}}), ConfigError);
}

TEST_CASE("explicit inlet velocity supersedes the Mach reading") {
    const auto cfg = load_config("", {{"inlet_velocity", "0.1"}});
    CHECK(cfg.resolved_inlet_velocity() == 0.1);
}

TEST_CASE("config parse errors carry context") {
    TempDir dir("flq_cfg_err");
    SUBCASE("malformed line reports the line number") {
        write_file(dir.file("bad.cfg"), "grid_nx = 128\nthis line has no equals\n");
        CHECK_THROWS_WITH_AS(load_config(dir.file("bad.cfg")), doctest::Contains("line 2"),
                             ConfigError);
    }
    SUBCASE("unknown key is named") {
        CHECK_THROWS_WITH_AS(load_config("", {{"grid_nz", "4"}}), doctest::Contains("grid_nz"),
                             ConfigError);
    }
    SUBCASE("type mismatch is reported") {
        CHECK_THROWS_WITH_AS(load_config("", {{"grid_nx", "banana"}}),
                             doctest::Contains("integer"), ConfigError);
    }
    SUBCASE("latent dimension is pinned") {
        CHECK_THROWS_AS(load_config("", {{"latent_dim", "9"}}), ConfigError);
    }
}

TEST_CASE("config hash is stable and sensitive") {
    const auto a = load_config("");
    const auto b = load_config("", {{"reynolds", "250"}});
    CHECK(a.config_hash() == load_config("").config_hash());
    CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("snapshot file format round-trips bit-exactly") {
    TempDir dir("flq_snap_io");
    io::SnapshotDataset ds;
    ds.nx = 12;
    ds.ny = 5;
    Rng rng(1);
    ds.values.resize(12 * 5 * 3);
    for (auto& v : ds.values) v = float(rng.normal());
    const auto path = dir.file("snaps.flq");
    io::write_snapshots(path, ds);
    const auto back = io::read_snapshots(path);
    CHECK(back.nx == 12);
    CHECK(back.ny == 5);
    CHECK(back.count() == 3);
    REQUIRE(back.values.size() == ds.values.size());
    for (std::size_t i = 0; i < ds.values.size(); ++i) CHECK(back.values[i] == ds.values[i]);

    // Byte-level check of the header.
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes.substr(0, 4) == "FLQ1");
    CHECK(bytes.size() == 20 + ds.values.size() * 4);
}

TEST_CASE("snapshot reader rejects damage with byte counts") {
    TempDir dir("flq_snap_bad");
    io::SnapshotDataset ds;
    ds.nx = 4;
    ds.ny = 4;
    ds.values.assign(32, 1.0f); // two frames
    const auto path = dir.file("snaps.flq");
    io::write_snapshots(path, ds);

    SUBCASE("truncated payload") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        write_file(dir.file("trunc.flq"), bytes.substr(0, bytes.size() - 7));
        CHECK_THROWS_WITH_AS(io::read_snapshots(dir.file("trunc.flq")),
                             doctest::Contains("expected"), IoError);
    }
    SUBCASE("bad magic") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes[0] = 'X';
        write_file(dir.file("magic.flq"), bytes);
        CHECK_THROWS_WITH_AS(io::read_snapshots(dir.file("magic.flq")),
                             doctest::Contains("magic"), IoError);
    }
    SUBCASE("header inconsistent with payload") {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes[12] = 9; // claim nine frames
        write_file(dir.file("count.flq"), bytes);
        CHECK_THROWS_AS(io::read_snapshots(dir.file("count.flq")), IoError);
    }
}

TEST_CASE("stages refuse to run without their upstream artifacts") {
    TempDir dir("flq_stage_prereq");
    auto cfg = load_config("");
    Stages stages(cfg, dir.file("out"));
    CHECK_THROWS_AS(stages.train_vqvae(), PrereqError);
    CHECK_THROWS_AS(stages.encode(), PrereqError);
    CHECK_THROWS_AS(stages.train_qcbm(), PrereqError);
    CHECK_THROWS_AS(stages.evaluate(), PrereqError);
    CHECK_THROWS_WITH_AS(stages.sample(), doctest::Contains("encode"), PrereqError);
    CHECK_THROWS_AS(stages.plot(), PrereqError);
}

TEST_CASE("seed derivation is stable across calls and distinct across stages") {
    CHECK(derive_seed(42, "vqvae") == derive_seed(42, "vqvae"));
    CHECK(derive_seed(42, "vqvae") != derive_seed(42, "qcbm"));
    CHECK(derive_seed(42, "vqvae") != derive_seed(43, "vqvae"));
}

TEST_CASE("rng streams are reproducible") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng n1(5), n2(5);
    for (int i = 0; i < 100; ++i) CHECK(n1.normal() == n2.normal());
}

TEST_CASE("CLI exit codes: usage, config error, prerequisite error") {
    TempDir dir("flq_cli");
    const std::string cli = FLQ_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("definitely-not-a-stage") == 2);
    CHECK(run("simulate --grid_nx=banana") == 2);
    CHECK(run("simulate --not_a_key=1") == 2);
    CHECK(run("evaluate --out=" + dir.file("empty_out")) == 3);
    CHECK(run("--help") == 0);
}

TEST_CASE("simulate stage writes a readable dataset and records the manifest") {
    TempDir dir("flq_stage_sim");
    auto cfg = load_config("", {{"grid_nx", "48"},
                                {"grid_ny", "32"},
                                {"cylinder_radius", "4"},
                                {"reynolds", "80"},
                                {"warmup_steps", "20"},
                                {"snapshot_interval", "2"},
                                {"snapshot_count", "3"}});
    Stages stages(cfg, dir.file("out"));
    stages.simulate();
    const auto ds = io::read_snapshots(stages.path("snapshots.flq"));
    CHECK(ds.nx == 48);
    CHECK(ds.ny == 32);
    CHECK(ds.count() == 3);
    CHECK(fs::exists(stages.path("manifest.json")));
    std::ifstream in(stages.path("manifest.json"));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("\"simulate\"") != std::string::npos);
    CHECK(text.find("config_hash") != std::string::npos);
}

TEST_CASE("mini end-to-end run; downstream stages reproduce artifacts byte-identically") {
    TempDir dir("flq_stage_isolation");
    auto cfg = load_config("", {{"grid_nx", "32"},
                                {"grid_ny", "32"},
                                {"cylinder_radius", "4"},
                                {"reynolds", "60"},
                                {"warmup_steps", "200"},
                                {"snapshot_interval", "5"},
                                {"snapshot_count", "48"},
                                {"vqvae_epochs", "2"},
                                {"vqvae_hidden", "64"},
                                {"codebook_size", "16"},
                                {"qcbm_iters", "3"},
                                {"qgan_epochs", "1"},
                                {"lstm_epochs", "3"},
                                {"tsne_perplexity", "8"},
                                {"tsne_iters", "60"},
                                {"sample_count", "40"}});
    const std::string out = dir.file("out");
    Stages stages(cfg, out);
    stages.all();

    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        REQUIRE(in);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string metrics_path = out + "/metrics.csv";
    const std::string samples_path = out + "/samples_qcbm.csv";
    const std::string tsne_path = out + "/tsne.svg";
    REQUIRE(fs::exists(metrics_path));
    REQUIRE(fs::exists(tsne_path));
    const auto rows = eval::parse_metrics_csv(metrics_path);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].nn_wins + rows[1].nn_wins + rows[2].nn_wins == 48);

    const std::string metrics_before = slurp(metrics_path);
    const std::string samples_before = slurp(samples_path);

    // Stage isolation: wipe downstream artifacts and re-run only those stages.
    for (const char* f : {"samples_qcbm.csv", "samples_qgan.csv", "samples_lstm.csv",
                          "metrics.csv", "pca.csv", "tsne.csv"})
        fs::remove(fs::path(out) / f);
    Stages again(cfg, out);
    again.sample();
    again.evaluate();
    CHECK(slurp(samples_path) == samples_before);
    CHECK(slurp(metrics_path) == metrics_before);
}
