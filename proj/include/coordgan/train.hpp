#pragma once

// Optimization orchestration: Adam, checkpoint IO, the GAN and encoder
// training loops, warmup scheduling and the lazy R1 cadence. Single update
// thread; given (config, seed) every checkpoint is byte-reproducible.

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coordgan/config.hpp"
#include "coordgan/data.hpp"
#include "coordgan/losses.hpp"
#include "coordgan/nets.hpp"

namespace coordgan::train {

// Thrown when a loss goes non-finite; the step's breakdown is dumped next to
// the run outputs first.
struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

struct Adam {
    double lr = 0.002, beta1 = 0.0, beta2 = 0.99, eps = 1e-8;
    int64_t t = 0;
    std::vector<std::pair<std::string, ad::Var>> params;
    std::vector<Tensor> m, v;

    Adam() = default;
    Adam(std::vector<std::pair<std::string, ad::Var>> params_, const TrainConfig& cfg);
    void step(const ad::Gradients<real>& grads);
};

// 64-bit FNV-1a over the raw parameter bytes (prefix-filtered).
uint64_t param_hash(const nets::ParamStoreT<real>& store, const std::string& prefix = "");

// ------------------------------------------------------- checkpoints ------

struct CheckpointState {
    int64_t iteration = 0;
    std::map<std::string, std::array<uint64_t, 4>> rng;  // named stream states
    std::map<std::string, int64_t> counters;             // adam step counts, cursors
};

void save_checkpoint(const std::string& dir, const nets::ParamStoreT<real>& params,
                     const TrainConfig& cfg, const CheckpointState& state,
                     const std::vector<const Adam*>& optims = {});
void load_checkpoint_params(const std::string& dir, nets::ParamStoreT<real>& params);
void load_checkpoint_optims(const std::string& dir, std::vector<Adam*> optims);
CheckpointState load_checkpoint_state(const std::string& dir);
TrainConfig load_checkpoint_config(const std::string& dir);

// ---------------------------------------------------------- logging -------

struct NdjsonLogger {
    explicit NdjsonLogger(const std::string& path);
    ~NdjsonLogger();
    void log(int64_t step, const losses::Breakdown& terms, const std::string& prefix);

private:
    void* out_;  // FILE*
};

// -------------------------------------------------------- GAN training ----

// Paired latent batch: structure codes [s0,s0,s1,s1,...], texture codes
// [t0,t1,t1,t2,...,t0] so adjacent pairs share structure and offset pairs
// share texture.
std::pair<Tensor, Tensor> make_paired_latents(int64_t batch, int64_t dim, Rng& rng);

struct GanTrainer {
    TrainConfig cfg;
    nets::CoordGanModel model;
    losses::Perceptual perc;
    Adam opt_g, opt_d;
    Rng latent_rng, crop_rng;
    int64_t iter = 0;
    int64_t data_epoch = 0, data_cursor = 0;
    std::vector<Tensor> dataset_nchw;  // [1,3,H,W] each
    std::vector<int64_t> order;
    std::string out_dir;

    explicit GanTrainer(const TrainConfig& cfg, std::string out_dir);

    Tensor next_real_batch();
    // One iteration: discriminator update, then generator update.
    losses::Breakdown step();
    // Full run with logging and periodic checkpoints; returns final ckpt dir.
    std::string run();

    void save(const std::string& dir) const;
    void restore(const std::string& dir);
};

// ---------------------------------------------------- encoder training ----

struct EncoderTrainer {
    TrainConfig cfg;
    nets::CoordGanModel model;
    losses::Perceptual perc;
    Adam opt_e;
    Rng latent_rng, aux_rng;
    int64_t iter = 0;
    int64_t data_epoch = 0, data_cursor = 0;
    std::vector<Tensor> dataset_nchw;
    std::vector<int64_t> order;
    std::string out_dir;
    Tensor probe_z_s, probe_z_t;  // fixed probe batch for the consistency curve

    EncoderTrainer(const TrainConfig& cfg, const std::string& generator_ckpt, std::string out_dir);

    Tensor next_real_batch();
    losses::Breakdown step();
    double probe_consistency() const;
    std::string run();
};

// HWC [-1,1] image to [1,3,H,W].
Tensor hwc_to_nchw1(const TensorT<real>& hwc);
TensorT<real> nchw1_to_hwc(const Tensor& nchw);

}  // namespace coordgan::train
