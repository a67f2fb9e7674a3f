// coordgan CLI: training, data synthesis, propagation and evaluation
// commands. Every run writes a config echo next to its outputs; all
// randomness is routed through --seed (which overrides the config seed).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "coordgan/coordspace.hpp"
#include "coordgan/data.hpp"
#include "coordgan/eval.hpp"
#include "coordgan/image_io.hpp"
#include "coordgan/train.hpp"

namespace fs = std::filesystem;
using namespace coordgan;

namespace {

std::string cache_root() {
    const char* env = std::getenv("COORDGAN_CACHE");
    return env && *env ? std::string(env) : std::string("coordgan_cache");
}

TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                        std::optional<uint64_t> seed) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : TrainConfig::load(path);
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
}

void write_echo(const TrainConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream echo((fs::path(out_dir) / "config_echo.cfg").string());
    echo << cfg.echo();
}

nets::CoordGanModel load_model(const std::string& ckpt_dir) {
    TrainConfig cfg = train::load_checkpoint_config(ckpt_dir);
    auto model = nets::CoordGanModel::create(cfg, cfg.seed);
    train::load_checkpoint_params(ckpt_dir, model.params);
    return model;
}

std::vector<data::Sample> eval_dataset(const TrainConfig& cfg) {
    // validation split: disjoint seed stream from the training set
    return data::synth_dataset(cfg.val_size, cfg.resolution, cfg.seed + 2000003);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CoordGAN: structure/texture-disentangled generation with explicit dense correspondences"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt_dir, resume_dir;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* copt = sub->add_option("--config", config_path, "config file (key=value sections)");
        if (needs_config) copt->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override config entries, section.key=value");
        sub->add_option("--seed", seed, "seed overriding the config seed");
    };

    // train-gan
    auto* train_gan = app.add_subcommand("train-gan", "train the generator and discriminators");
    add_common(train_gan, true);
    train_gan->add_option("--out", out_dir, "output directory");
    train_gan->add_option("--resume", resume_dir, "checkpoint directory to resume from");

    // train-encoder
    std::string generator_ckpt;
    auto* train_enc = app.add_subcommand("train-encoder", "train the inversion encoder on a frozen generator");
    add_common(train_enc, true);
    train_enc->add_option("--generator", generator_ckpt, "generator checkpoint directory")->required();
    train_enc->add_option("--out", out_dir, "output directory");

    // synth-data
    int64_t count = 64, resolution = 32;
    auto* synth = app.add_subcommand("synth-data", "write a procedural dataset with masks");
    add_common(synth, false);
    synth->add_option("--count", count, "number of samples");
    synth->add_option("--resolution", resolution, "image side in pixels");
    synth->add_option("--out", out_dir, "output directory")->required();

    // propagate
    std::string ref_path, mask_path, palette_path, query_path, pred_path;
    double tau_flag = -1;
    auto* prop = app.add_subcommand("propagate", "propagate a reference mask to a query image");
    add_common(prop, false);
    prop->add_option("--encoder", ckpt_dir, "encoder checkpoint directory")->required();
    prop->add_option("--ref", ref_path, "reference image (PNG/JPEG)")->required();
    prop->add_option("--mask", mask_path, "reference mask (8-bit PNG)")->required();
    prop->add_option("--palette", palette_path, "palette JSON sidecar")->required();
    prop->add_option("--query", query_path, "query image")->required();
    prop->add_option("--out", pred_path, "output mask PNG")->required();
    prop->add_option("--tau", tau_flag, "affinity temperature (default: config tau)");

    // swap-grid
    int64_t rows = 4, cols = 4;
    std::string grid_path;
    auto* grid = app.add_subcommand("swap-grid", "render a structure x texture grid with correspondence maps");
    add_common(grid, false);
    grid->add_option("--generator", ckpt_dir, "generator checkpoint directory")->required();
    grid->add_option("--rows", rows, "structure rows");
    grid->add_option("--cols", cols, "texture columns");
    grid->add_option("--out", grid_path, "output PNG")->required();

    // eval-iou
    std::string report_path;
    auto* eiou = app.add_subcommand("eval-iou", "label-propagation IOU protocol on the synthetic set");
    add_common(eiou, false);
    eiou->add_option("--encoder", ckpt_dir, "encoder checkpoint directory")->required();
    eiou->add_option("--out", report_path, "report JSON path");

    // eval-swap
    int64_t pairs_flag = -1;
    auto* eswap = app.add_subcommand("eval-swap", "swap-consistency metrics with independent-pair controls");
    add_common(eswap, false);
    eswap->add_option("--generator", ckpt_dir, "generator checkpoint directory")->required();
    eswap->add_option("--pairs", pairs_flag, "number of pairs (default: config)");
    eswap->add_option("--out", report_path, "report JSON path");

    // export-corr
    std::string corr_path, image_path;
    uint64_t structure_seed = 1;
    auto* ecorr = app.add_subcommand("export-corr", "export a correspondence map as CGCM");
    add_common(ecorr, false);
    ecorr->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    ecorr->add_option("--structure-seed", structure_seed, "generate from this structure seed");
    ecorr->add_option("--image", image_path, "encode this image instead of generating");
    ecorr->add_option("--out", corr_path, "output .cgcm path")->required();

    // inspect-ckpt
    auto* inspect = app.add_subcommand("inspect-ckpt", "print checkpoint manifest summary");
    inspect->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*train_gan) {
            TrainConfig cfg = load_config(config_path, overrides, seed);
            if (out_dir.empty()) out_dir = (fs::path(cache_root()) / "train-gan").string();
            train::GanTrainer trainer(cfg, out_dir);
            if (!resume_dir.empty()) trainer.restore(resume_dir);
            const std::string final_ckpt = trainer.run();
            std::printf("final checkpoint: %s\n", final_ckpt.c_str());
            std::printf("params hash: %016llx\n",
                        static_cast<unsigned long long>(train::param_hash(trainer.model.params)));
        } else if (*train_enc) {
            TrainConfig cfg = load_config(config_path, overrides, seed);
            if (out_dir.empty()) out_dir = (fs::path(cache_root()) / "train-encoder").string();
            train::EncoderTrainer trainer(cfg, generator_ckpt, out_dir);
            const std::string final_ckpt = trainer.run();
            std::printf("final checkpoint: %s\n", final_ckpt.c_str());
        } else if (*synth) {
            TrainConfig cfg = load_config(config_path, overrides, seed);
            auto samples = data::synth_dataset(count, resolution, cfg.seed);
            data::write_synth_dataset(out_dir, samples);
            write_echo(cfg, out_dir);
            std::printf("wrote %lld samples to %s\n", static_cast<long long>(count), out_dir.c_str());
        } else if (*prop) {
            auto model = load_model(ckpt_dir);
            const double tau = tau_flag > 0 ? tau_flag : model.cfg.tau;
            auto palette = data::read_palette(palette_path);
            auto mask = data::load_mask(mask_path, palette);
            auto ref_img = data::load_image_file(ref_path, model.cfg.resolution);
            auto query_img = data::load_image_file(query_path, model.cfg.resolution);
            auto c_ref = eval::encode_map(model, train::hwc_to_nchw1(ref_img));
            auto c_query = eval::encode_map(model, train::hwc_to_nchw1(query_img));
            auto pred = coords::propagate_labels(mask, c_ref, c_query, real(tau));
            data::write_mask(pred_path, pred);
            std::printf("wrote %s\n", pred_path.c_str());
        } else if (*grid) {
            auto model = load_model(ckpt_dir);
            Rng rng(seed.value_or(model.cfg.seed));
            std::vector<uint64_t> srows, tcols;
            for (int64_t r = 0; r < rows; ++r) srows.push_back(rng.next_u64());
            for (int64_t c = 0; c < cols; ++c) tcols.push_back(rng.next_u64());
            eval::render_grid(model, srows, tcols, grid_path);
            std::printf("wrote %s\n", grid_path.c_str());
        } else if (*eiou) {
            auto model = load_model(ckpt_dir);
            TrainConfig cfg = model.cfg;
            for (const auto& o : overrides) cfg.apply_override(o);
            auto dataset = eval_dataset(cfg);
            auto report = eval::eval_label_propagation(model, dataset, cfg, seed.value_or(cfg.seed));
            std::printf("%s", report.to_table().c_str());
            if (!report_path.empty()) {
                std::ofstream out(report_path);
                out << report.to_json() << "\n";
            }
        } else if (*eswap) {
            auto model = load_model(ckpt_dir);
            TrainConfig cfg = model.cfg;
            for (const auto& o : overrides) cfg.apply_override(o);
            const int64_t pairs = pairs_flag > 0 ? pairs_flag : cfg.swap_pairs;
            auto report = eval::eval_swap_consistency(model, pairs, cfg, seed.value_or(cfg.seed));
            std::printf("%s", report.to_table().c_str());
            if (!report_path.empty()) {
                std::ofstream out(report_path);
                out << report.to_json() << "\n";
            }
        } else if (*ecorr) {
            auto model = load_model(ckpt_dir);
            coords::CoordinateMap map =
                image_path.empty()
                    ? eval::generate_map(model, structure_seed)
                    : eval::encode_map(model, train::hwc_to_nchw1(data::load_image_file(
                                                  image_path, model.cfg.resolution)));
            coords::write_cgcm(corr_path, map);
            std::printf("wrote %s\n", corr_path.c_str());
        } else if (*inspect) {
            TrainConfig cfg = train::load_checkpoint_config(ckpt_dir);
            auto model = nets::CoordGanModel::create(cfg, cfg.seed);
            train::load_checkpoint_params(ckpt_dir, model.params);
            auto st = train::load_checkpoint_state(ckpt_dir);
            int64_t total = 0;
            std::printf("%-44s %-16s %s\n", "parameter", "shape", "elements");
            for (const auto& [name, p] : model.params.items) {
                std::printf("%-44s %-16s %lld\n", name.c_str(), shape_str(p.shape()).c_str(),
                            static_cast<long long>(p.numel()));
                total += p.numel();
            }
            std::printf("total parameters: %lld\niteration: %lld\nparams hash: %016llx\n",
                        static_cast<long long>(total), static_cast<long long>(st.iteration),
                        static_cast<unsigned long long>(train::param_hash(model.params)));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
