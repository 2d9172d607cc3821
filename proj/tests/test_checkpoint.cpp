#include <gtest/gtest.h>

#include <filesystem>

#include "taanp/checkpoint.hpp"
#include "test_util.hpp"

using namespace taanp;
namespace fs = std::filesystem;

namespace {

std::string scratch_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "taanp_ckpt_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::TAANP, 7);
  ModelParams params = ModelParams::init(cfg, 77);
  params.norm.y_mean = 52.5;
  params.norm.y_scale = 17.25;
  for (int j = 0; j < cfg.x_dim; ++j) {
    params.norm.x_offset[static_cast<std::size_t>(j)] = 0.125 * j;
    params.norm.x_scale[static_cast<std::size_t>(j)] = 1.0 + 0.5 * j;
  }
  std::string p1 = scratch_path("a.ckpt");
  std::string p2 = scratch_path("b.ckpt");
  save_model(p1, params);
  ModelParams loaded = load_model(p1);
  save_model(p2, loaded);
  EXPECT_EQ(read_text_file(p1), read_text_file(p2));
  EXPECT_EQ(loaded.norm.y_mean, params.norm.y_mean);
  EXPECT_EQ(loaded.norm.x_scale, params.norm.x_scale);
  EXPECT_EQ(loaded.cfg.variant, Variant::TAANP);
}

TEST(Checkpoint, Float32PayloadRoundTripsExactly) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::ANP, 5);
  ModelParams params = ModelParams::init(cfg, 3);
  std::string p = scratch_path("f32.ckpt");
  save_model(p, params);
  ModelParams loaded = load_model(p);
  for (std::size_t i = 0; i < params.parameters().size(); ++i) {
    const Tensor& orig = params.parameters()[i]->value;
    const Tensor& got = loaded.parameters()[i]->value;
    for (std::size_t k = 0; k < orig.size(); ++k)
      EXPECT_EQ(static_cast<double>(static_cast<float>(orig.data[k])),
                got.data[k]);
  }
}

TEST(Checkpoint, Float64StatePreservesDoublesExactly) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::LNP, 5);
  ModelParams params = ModelParams::init(cfg, 4);
  CheckpointFile ck = model_to_checkpoint(params, "f64");
  std::string p = scratch_path("f64.ckpt");
  write_checkpoint(p, ck);
  ModelParams loaded = model_from_checkpoint(read_checkpoint(p));
  for (std::size_t i = 0; i < params.parameters().size(); ++i)
    EXPECT_EQ(params.parameters()[i]->value.data,
              loaded.parameters()[i]->value.data);
}

TEST(Checkpoint, TruncatedFileIsIoError) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::CNP, 5);
  ModelParams params = ModelParams::init(cfg, 5);
  std::string p = scratch_path("trunc.ckpt");
  save_model(p, params);
  std::string body = read_text_file(p);
  write_text_file(p, body.substr(0, body.size() / 2));
  EXPECT_THROW(load_model(p), IoError);
}

TEST(Checkpoint, MissingTensorIsIoError) {
  ModelConfig cfg = testutil::tiny_model_config(Variant::CNP, 5);
  ModelParams params = ModelParams::init(cfg, 6);
  CheckpointFile ck = model_to_checkpoint(params);
  ck.tensors.pop_back();
  EXPECT_THROW(model_from_checkpoint(ck), IoError);
}

TEST(Checkpoint, NotACheckpointIsIoError) {
  std::string p = scratch_path("garbage.ckpt");
  write_text_file(p, "definitely not a checkpoint\n");
  EXPECT_THROW(load_model(p), IoError);
}
