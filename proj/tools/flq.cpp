// flq: end-to-end workbench driving the study pipeline.
//
//   flq <stage> [--config=FILE] [--out=DIR] [--key=value ...]
//
// Stages: simulate, train-vqvae, encode, train-qcbm, train-qgan, train-lstm,
// sample, evaluate, plot, all. Any config key can be overridden with
// --key=value; FLQ_OUTPUT_ROOT sets the default output root.
//
// Exit codes: 0 success, 2 config error, 3 missing prerequisite artifact,
// 4 numerical failure.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "flq/core/errors.hpp"
#include "flq/pipeline/stages.hpp"

namespace {

void print_usage() {
    std::cout
        << "usage: flq <stage> [options]\n\n"
           "stages:\n"
           "  simulate     run the lattice Boltzmann cylinder flow, write snapshots.flq\n"
           "  train-vqvae  train the VQ-VAE on the snapshot dataset\n"
           "  encode       encode every snapshot into the 7-dim latent table\n"
           "  train-qcbm   train the seven Born machines on the latent marginals\n"
           "  train-qgan   train the quantum GAN against the latent table\n"
           "  train-lstm   train the LSTM baseline\n"
           "  sample       draw latent samples from all three trained models\n"
           "  evaluate     compute comparison metrics, PCA and t-SNE (CSV outputs)\n"
           "  plot         render SVG plots from the evaluate CSVs\n"
           "  all          run the full chain\n\n"
           "options:\n"
           "  --config=FILE   key-value config file (defaults apply when omitted)\n"
           "  --out=DIR       output directory (default: config output_dir, or\n"
           "                  $FLQ_OUTPUT_ROOT/<output_dir> when the env var is set)\n"
           "  --key=value     override any config key, e.g. --reynolds=250\n"
           "  --help          this message\n";
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
        print_usage();
        return args.empty() ? 2 : 0;
    }
    const std::string stage = args[0];
    const std::vector<std::string> known = {"simulate",   "train-vqvae", "encode",
                                            "train-qcbm", "train-qgan",  "train-lstm",
                                            "sample",     "evaluate",    "plot",
                                            "all"};
    if (std::find(known.begin(), known.end(), stage) == known.end()) {
        std::cerr << "flq: unknown stage '" << stage << "'\n\n";
        print_usage();
        return 2;
    }

    std::string config_path;
    std::string out_override;
    std::vector<std::pair<std::string, std::string>> overrides;
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--help" || a == "-h") {
            print_usage();
            return 0;
        }
        if (a.rfind("--", 0) != 0 || a.find('=') == std::string::npos) {
            std::cerr << "flq: expected --key=value, got '" << a << "'\n";
            return 2;
        }
        const std::string key = a.substr(2, a.find('=') - 2);
        const std::string value = a.substr(a.find('=') + 1);
        if (key == "config")
            config_path = value;
        else if (key == "out")
            out_override = value;
        else
            overrides.emplace_back(key, value);
    }

    try {
        auto cfg = flq::pipeline::load_config(config_path, overrides);
        std::string out = out_override.empty() ? cfg.output_dir : out_override;
        if (const char* root = std::getenv("FLQ_OUTPUT_ROOT");
            root != nullptr && out_override.empty()) {
            out = (std::filesystem::path(root) / out).string();
        }
        flq::pipeline::Stages stages(cfg, out);

        if (stage == "simulate")
            stages.simulate();
        else if (stage == "train-vqvae")
            stages.train_vqvae();
        else if (stage == "encode")
            stages.encode();
        else if (stage == "train-qcbm")
            stages.train_qcbm();
        else if (stage == "train-qgan")
            stages.train_qgan();
        else if (stage == "train-lstm")
            stages.train_lstm();
        else if (stage == "sample")
            stages.sample();
        else if (stage == "evaluate")
            stages.evaluate();
        else if (stage == "plot")
            stages.plot();
        else
            stages.all();
        return 0;
    } catch (const flq::ConfigError& e) {
        std::cerr << "flq: config error: " << e.what() << "\n";
        return 2;
    } catch (const flq::PrereqError& e) {
        std::cerr << "flq: " << e.what() << "\n";
        return 3;
    } catch (const flq::NumericalError& e) {
        std::cerr << "flq: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "flq: error: " << e.what() << "\n";
        return 1;
    }
}
