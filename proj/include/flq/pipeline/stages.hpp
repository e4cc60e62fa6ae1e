#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "flq/core/csv.hpp"
#include "flq/core/errors.hpp"
#include "flq/core/parallel.hpp"
#include "flq/eval/report.hpp"
#include "flq/io/snapshot.hpp"
#include "flq/latent.hpp"
#include "flq/lbm/simulator.hpp"
#include "flq/lstm/model.hpp"
#include "flq/pipeline/config.hpp"
#include "flq/pipeline/manifest.hpp"
#include "flq/qcbm/model.hpp"
#include "flq/qgan/model.hpp"
#include "flq/vqvae/model.hpp"

namespace flq::pipeline {

// Stage orchestration. Each stage reads upstream artifacts from the output
// directory and writes its own; per-stage seeds are derived from the master
// seed so stages re-run independently with stable randomness.
class Stages {
public:
    Stages(PipelineConfig config, std::string out_dir)
        : cfg_(std::move(config)), out_(std::move(out_dir)), manifest_(path("manifest.json")) {
        std::filesystem::create_directories(out_);
        if (cfg_.workers > 0) set_default_workers(cfg_.workers);
        manifest_.set_config(cfg_.config_hash(), cfg_.resolved_map());
    }

    std::string path(const std::string& name) const {
        return (std::filesystem::path(out_) / name).string();
    }

    void require_artifact(const std::string& name, const std::string& producing_stage) const {
        if (!std::filesystem::exists(path(name)))
            throw PrereqError("missing artifact '" + name + "'; run the '" + producing_stage +
                              "' stage first");
    }

    void simulate() {
        StageTimer timer;
        const auto lattice = cfg_.lattice_config();
        const auto snaps = lbm::collect_snapshots(lattice, cfg_.warmup_steps,
                                                  cfg_.snapshot_interval, cfg_.snapshot_count);
        io::write_snapshots(path("snapshots.flq"), io::pack_snapshots(snaps));
        manifest_.record_stage("simulate", timer.elapsed_ms(), {path("snapshots.flq")});
    }

    void train_vqvae() {
        require_artifact("snapshots.flq", "simulate");
        StageTimer timer;
        const auto data = io::read_snapshots(path("snapshots.flq"));
        vqvae::VqVaeConfig vc;
        vc.height = data.nx;
        vc.width = data.ny;
        vc.codebook_size = std::size_t(cfg_.codebook_size);
        vc.hidden_dim = std::size_t(cfg_.vqvae_hidden);
        vc.beta = cfg_.vqvae_beta;
        auto model = vqvae::VqVaeModel::init(vc, derive_seed(cfg_.master_seed, "vqvae-init"));
        const auto hist = vqvae::train(model, data, derive_seed(cfg_.master_seed, "vqvae"),
                                       cfg_.vqvae_epochs, std::size_t(cfg_.vqvae_batch),
                                       cfg_.vqvae_lr);
        model.save(path("vqvae.flp"));
        std::string csv = "epoch,total,reconstruction,codebook,commitment\n";
        for (std::size_t e = 0; e < hist.total.size(); ++e)
            csv += std::to_string(e) + "," + format_double(hist.total[e]) + "," +
                   format_double(hist.reconstruction[e]) + "," + format_double(hist.codebook[e]) +
                   "," + format_double(hist.commitment[e]) + "\n";
        write_text_file(path("vqvae_loss.csv"), csv);
        manifest_.record_stage("train-vqvae", timer.elapsed_ms(),
                               {path("vqvae.flp"), path("vqvae_loss.csv")});
    }

    void encode() {
        require_artifact("snapshots.flq", "simulate");
        require_artifact("vqvae.flp", "train-vqvae");
        StageTimer timer;
        const auto data = io::read_snapshots(path("snapshots.flq"));
        auto model = vqvae::VqVaeModel::load(path("vqvae.flp"));
        const auto table = vqvae::encode_dataset(model, data);
        table.write_csv(path("latents.csv"));
        table.write_stats_csv(path("latent_stats.csv"));
        manifest_.record_stage("encode", timer.elapsed_ms(),
                               {path("latents.csv"), path("latent_stats.csv")});
    }

    LatentTable load_latents() const {
        require_artifact("latents.csv", "encode");
        require_artifact("latent_stats.csv", "encode");
        return LatentTable::read_csv(path("latents.csv"), path("latent_stats.csv"));
    }

    void train_qcbm() {
        StageTimer timer;
        const auto table = load_latents();
        const auto kernel = qcbm::MmdKernel::standard();
        std::array<std::vector<double>, kLatentDim> losses;
        const auto model =
            qcbm::train_qcbm_model(table.columns(), kernel, derive_seed(cfg_.master_seed, "qcbm"),
                                   cfg_.qcbm_iters, cfg_.qcbm_lr, &losses);
        model.save(path("qcbm.flp"));
        std::string csv = "iteration";
        for (int d = 0; d < kLatentDim; ++d) csv += ",dim" + std::to_string(d);
        csv += "\n";
        for (std::size_t it = 0; it < losses[0].size(); ++it) {
            csv += std::to_string(it);
            for (int d = 0; d < kLatentDim; ++d) csv += "," + format_double(losses[d][it]);
            csv += "\n";
        }
        write_text_file(path("qcbm_loss.csv"), csv);
        manifest_.record_stage("train-qcbm", timer.elapsed_ms(),
                               {path("qcbm.flp"), path("qcbm_loss.csv")});
    }

    void train_qgan() {
        StageTimer timer;
        const auto table = load_latents();
        auto model = qgan::init_qgan(table, cfg_.master_seed);
        const auto hist = qgan::train_qgan(model, table, cfg_.master_seed, cfg_.qgan_epochs,
                                           std::size_t(cfg_.qgan_batch), cfg_.qgan_lr);
        model.save(path("qgan.flp"));
        std::string csv = "batch,d_loss,g_loss,d_real_mean,d_fake_mean\n";
        for (std::size_t b = 0; b < hist.batches.size(); ++b)
            csv += std::to_string(b) + "," + format_double(hist.batches[b].d_loss) + "," +
                   format_double(hist.batches[b].g_loss) + "," +
                   format_double(hist.batches[b].d_real_mean) + "," +
                   format_double(hist.batches[b].d_fake_mean) + "\n";
        write_text_file(path("qgan_loss.csv"), csv);
        manifest_.record_stage("train-qgan", timer.elapsed_ms(),
                               {path("qgan.flp"), path("qgan_loss.csv")});
    }

    void train_lstm() {
        StageTimer timer;
        const auto table = load_latents();
        auto params = lstm::LstmParams::init(derive_seed(cfg_.master_seed, "lstm-init"));
        const auto hist = lstm::train_lstm(params, table, cfg_.master_seed, cfg_.lstm_epochs,
                                           std::size_t(cfg_.lstm_batch), cfg_.lstm_lr);
        params.save(path("lstm.flp"));
        std::string csv = "epoch,mse\n";
        for (std::size_t e = 0; e < hist.loss.size(); ++e)
            csv += std::to_string(e) + "," + format_double(hist.loss[e]) + "\n";
        write_text_file(path("lstm_loss.csv"), csv);
        manifest_.record_stage("train-lstm", timer.elapsed_ms(),
                               {path("lstm.flp"), path("lstm_loss.csv")});
    }

    void sample() {
        const auto table = load_latents();
        require_artifact("qcbm.flp", "train-qcbm");
        require_artifact("qgan.flp", "train-qgan");
        require_artifact("lstm.flp", "train-lstm");
        StageTimer timer;
        const std::size_t count =
            cfg_.sample_count > 0 ? std::size_t(cfg_.sample_count) : table.size();

        {
            const auto model = qcbm::QcbmModel::load(path("qcbm.flp"));
            Rng rng(derive_seed(cfg_.master_seed, "sample.qcbm"));
            SampleMatrix m;
            for (std::size_t i = 0; i < count; ++i)
                m.rows.push_back(qcbm::sample_latent_vector(model, rng));
            m.write_csv(path("samples_qcbm.csv"));
        }
        {
            const auto model = qgan::QganModel::load(path("qgan.flp"));
            Rng rng(derive_seed(cfg_.master_seed, "sample.qgan"));
            SampleMatrix m;
            for (std::size_t i = 0; i < count; ++i)
                m.rows.push_back(qgan::sample_qgan(model, rng));
            m.write_csv(path("samples_qgan.csv"));
        }
        {
            const auto params = lstm::LstmParams::load(path("lstm.flp"));
            Rng rng(derive_seed(cfg_.master_seed, "sample.lstm"));
            SampleMatrix m;
            for (std::size_t i = 0; i < count; ++i)
                m.rows.push_back(lstm::sample_lstm(params, rng));
            m.write_csv(path("samples_lstm.csv"));
        }
        manifest_.record_stage("sample", timer.elapsed_ms(),
                               {path("samples_qcbm.csv"), path("samples_qgan.csv"),
                                path("samples_lstm.csv")});
    }

    eval::MetricsReport build_metrics(bool run_tsne) const {
        const auto table = load_latents();
        for (const char* f : {"samples_qcbm.csv", "samples_qgan.csv", "samples_lstm.csv"})
            require_artifact(f, "sample");
        std::vector<eval::SampleSet> sets;
        for (const char* tag : {"qcbm", "qgan", "lstm"}) {
            eval::SampleSet s;
            s.tag = tag;
            s.rows = SampleMatrix::read_csv(path(std::string("samples_") + tag + ".csv")).rows;
            sets.push_back(std::move(s));
        }
        eval::TsneOptions topt;
        topt.perplexity = cfg_.tsne_perplexity;
        topt.iters = cfg_.tsne_iters;
        topt.seed = derive_seed(cfg_.master_seed, "tsne");
        return eval::build_report(table.rows, sets, topt, run_tsne);
    }

    void evaluate() {
        StageTimer timer;
        const auto report = build_metrics(true);
        eval::emit_report_csvs(report, out_);
        manifest_.record_stage("evaluate", timer.elapsed_ms(),
                               {path("metrics.csv"), path("pca.csv"), path("tsne.csv")});
    }

    // Re-renders the SVG plots from the evaluate stage's CSVs.
    void plot() {
        for (const char* f : {"metrics.csv", "pca.csv", "distance_histogram.csv"})
            require_artifact(f, "evaluate");
        StageTimer timer;
        const auto report = eval::load_report(out_);
        eval::emit_report_plots(report, out_);
        manifest_.record_stage("plot", timer.elapsed_ms(),
                               {path("pca.svg"), path("tsne.svg"), path("avg_min_distance.svg"),
                                path("nn_counts.svg"), path("distance_histogram.svg")});
    }

    void all() {
        simulate();
        train_vqvae();
        encode();
        train_qcbm();
        train_qgan();
        train_lstm();
        sample();
        evaluate();
        plot();
    }

    const PipelineConfig& config() const { return cfg_; }

private:
    PipelineConfig cfg_;
    std::string out_;
    RunManifest manifest_;
};

} // namespace flq::pipeline
