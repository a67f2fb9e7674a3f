#pragma once

// Run configuration: INI-style key=value file with [sections], dotted-path
// overrides, and an echo facility so every run records the exact settings it
// used. The full schema is documented in docs/config.md.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace coordgan {

struct TrainConfig {
    // model
    int64_t resolution = 32;
    int64_t latent_dim = 64;
    int64_t map_depth = 4;
    int64_t map_hidden = 64;
    int64_t warp_hidden = 128;
    int64_t posenc_channels = 128;
    int64_t gen_channels = 32;
    int64_t gen_layers = 6;
    int64_t rgb_every = 2;
    int64_t disc_channels = 32;
    int64_t patch_channels = 32;
    int64_t patch_feat = 64;
    int64_t enc_channels = 32;
    int64_t upsample_blocks = 0;  // post-hoc high-res stages; 0 in all shipped configs
    bool struc_mod = true;
    std::string struc_mod_mask;  // optional csv of 0/1 per generator layer
    bool backward_mlp = false;

    // loss
    double lambda_t = 5.0;
    double lambda_s = 1.0;
    double lambda_warp = 5.0;
    double lambda_cham = 100.0;
    double lambda_gan = 2.0;
    double lambda_con = 10.0;
    double lambda_rec = 10.0;
    double lambda_bmlp = 1.0;
    double tau = 0.01;
    double r1_gamma_img = 10.0;
    double r1_gamma_patch = 1.0;
    int64_t r1_interval = 16;
    uint64_t perceptual_seed = 1234;
    int64_t perceptual_channels = 16;

    // train
    int64_t batch = 8;
    int64_t iters = 3000;
    int64_t warmup = 300;
    double lr = 0.002;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    int64_t ckpt_interval = 1000;
    int64_t log_interval = 25;
    int64_t encoder_iters = 1500;
    bool use_warp_loss = true;
    bool use_structure_swap = true;
    bool use_texture_swap = true;

    // data
    std::string data_kind = "synthetic";  // synthetic | folder
    std::string data_path;
    int64_t train_size = 512;
    int64_t val_size = 96;
    bool augment_flip = false;

    // eval
    int64_t prop_runs = 5;
    int64_t prop_queries = 64;
    int64_t swap_pairs = 200;

    // Parsed per-layer mask; derived from struc_mod / struc_mod_mask.
    std::vector<bool> struc_mod_layers() const;

    void validate() const;

    static TrainConfig load(const std::string& path);
    // "section.key=value"; last one wins.
    void apply_override(const std::string& assignment);
    // Ordered section.key=value lines (the config echo).
    std::string echo() const;
    std::map<std::string, std::string> as_map() const;
};

// Low-level INI reader (sections, key=value, '#'/';' comments).
std::map<std::string, std::string> parse_ini(const std::string& text);

}  // namespace coordgan
