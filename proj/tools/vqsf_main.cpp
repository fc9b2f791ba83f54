// vqsf: dataset generation, training, completion and evaluation.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "vqsf/cli/commands.hpp"
#include "vqsf/common/error.hpp"

namespace fs = std::filesystem;
using namespace vqsf;
using namespace vqsf::cli;

namespace {

struct Global {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> run_dir;
  std::optional<std::int64_t> seed;
};

// defaults < config file < --set < dedicated flags
RunConfig resolve(const Global& g, const std::vector<std::string>& flags) {
  RunConfig c = g.config_file.empty() ? RunConfig() : RunConfig::from_file(g.config_file);
  c.apply_overrides(g.overrides);
  if (g.run_dir) c.set("run_dir", *g.run_dir);
  if (g.seed) c.set("seed", std::to_string(*g.seed));
  c.apply_overrides(flags);
  c.validate();
  return c;
}

template <class T>
void flag_to(std::vector<std::string>& out, const char* key, const std::optional<T>& v) {
  if (v) out.push_back(std::string(key) + "=" + std::to_string(*v));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-sequence shape completion: VQDIF encoder/decoder and ShapeFormer sampler"};
  app.set_version_flag("--version", std::string("vqsf ") + kToolVersion);
  app.require_subcommand(1);

  Global g;
  app.add_option("-c,--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "config override key=value (repeatable)");
  app.add_option("--run-dir", g.run_dir, "output root (config key run_dir)");
  app.add_option("--seed", g.seed, "master seed (config key seed)");

  auto* gen = app.add_subcommand("gen-data", "generate the procedural dataset and its manifest");

  TrainRequest vq_req, sf_req;
  std::optional<std::int64_t> vq_steps, sf_steps;
  auto* tv = app.add_subcommand("train-vqdif", "train the VQDIF autoencoder");
  tv->add_flag("--resume", vq_req.resume, "continue from the checkpoint");
  tv->add_option("--checkpoint", vq_req.checkpoint, "checkpoint path (default <run_dir>/checkpoints/vqdif.ckpt)");
  tv->add_option("--steps", vq_steps, "total steps (config key vqdif.steps)");

  auto* ts = app.add_subcommand("train-shapeformer", "train ShapeFormer on encoded scan/shape pairs");
  ts->add_flag("--resume", sf_req.resume, "continue from the checkpoint");
  ts->add_option("--checkpoint", sf_req.checkpoint, "checkpoint path (default <run_dir>/checkpoints/shapeformer.ckpt)");
  ts->add_option("--vqdif-checkpoint", sf_req.vqdif_checkpoint, "trained VQDIF checkpoint");
  ts->add_option("--steps", sf_steps, "total steps (config key sf.steps)");

  fs::path enc_in, enc_out, enc_ckpt;
  auto* enc = app.add_subcommand("encode", "encode a point cloud (.xyz) into a sparse sequence (.vqsq)");
  enc->add_option("input", enc_in, "point cloud")->required()->check(CLI::ExistingFile);
  enc->add_option("output", enc_out, "sequence file")->required();
  enc->add_option("--vqdif-checkpoint", enc_ckpt);

  CompleteRequest creq;
  std::optional<double> top_p;
  std::optional<std::int64_t> num_samples, sample_seed, max_len;
  auto* comp = app.add_subcommand("complete", "sample completions of a partial scan");
  comp->add_option("scan", creq.scan, "partial point cloud (.xyz)")->check(CLI::ExistingFile);
  comp->add_option("--split", creq.split, "complete the selected views of every shape in a dataset split");
  comp->add_option("-o,--output", creq.output, "output directory");
  comp->add_option("--top-p", top_p, "nucleus threshold (config key sample.top_p)");
  comp->add_option("-k,--num-samples", num_samples, "samples per scan (config key sample.num_samples)");
  comp->add_option("--sample-seed", sample_seed, "sampling seed (config key sample.seed)");
  comp->add_option("--max-len", max_len, "max generated tuples, 0 = unbounded (config key sample.max_len)");
  comp->add_option("--vqdif-checkpoint", creq.vqdif_checkpoint);
  comp->add_option("--shapeformer-checkpoint", creq.shapeformer_checkpoint);

  fs::path rec_in, rec_out, rec_ckpt;
  std::optional<std::int64_t> rec_res;
  auto* rec = app.add_subcommand("reconstruct", "decode a sparse sequence (.vqsq) into a mesh (.obj)");
  rec->add_option("input", rec_in, "sequence file")->required()->check(CLI::ExistingFile);
  rec->add_option("output", rec_out, "mesh file")->required();
  rec->add_option("--resolution", rec_res, "marching-cubes grid (config key sample.resolution)");
  rec->add_option("--vqdif-checkpoint", rec_ckpt);

  fs::path ev_data, ev_comp;
  auto* ev = app.add_subcommand("eval", "score completions against the test split");
  ev->add_option("--dataset", ev_data, "dataset directory (default: config data.dir)");
  ev->add_option("--completions", ev_comp, "completions directory (default <run_dir>/samples)");

  std::size_t gc_cases = 10;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every autodiff op");
  gc->add_option("--cases", gc_cases, "random cases per op")->check(CLI::Range(1, 100000));
  gc->add_option("--check-seed", gc_seed, "seed for the random cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    auto& log = std::cerr;
    // a failed gradient comparison is a numeric failure
    if (gc->parsed()) return cmd_grad_check(gc_cases, gc_seed, std::cout) ? 0 : static_cast<int>(ExitCode::divergence);

    std::vector<std::string> flags;
    if (tv->parsed()) flag_to(flags, "vqdif.steps", vq_steps);
    if (ts->parsed()) flag_to(flags, "sf.steps", sf_steps);
    if (comp->parsed()) {
      if (top_p) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", *top_p);
        flags.push_back(std::string("sample.top_p=") + buf);
      }
      flag_to(flags, "sample.num_samples", num_samples);
      flag_to(flags, "sample.seed", sample_seed);
      flag_to(flags, "sample.max_len", max_len);
    }
    if (rec->parsed()) flag_to(flags, "sample.resolution", rec_res);
    const RunConfig config = resolve(g, flags);
    prepare_run_dir(config);

    if (gen->parsed()) cmd_gen_data(config, log);
    if (tv->parsed()) cmd_train_vqdif(config, vq_req, log);
    if (ts->parsed()) cmd_train_shapeformer(config, sf_req, log);
    if (enc->parsed()) cmd_encode(config, enc_ckpt, enc_in, enc_out, log);
    if (comp->parsed()) cmd_complete(config, creq, log);
    if (rec->parsed()) cmd_reconstruct(config, rec_ckpt, rec_in, rec_out, log);
    if (ev->parsed()) cmd_eval(config, ev_data, ev_comp, std::cout);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  }
}
