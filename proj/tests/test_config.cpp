#include "gradformer/config.hpp"
#include "gradformer/errors.hpp"
#include "support.hpp"

using namespace gradformer;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parsing key = value text") {
  const auto c = parse_config(
      "# comment\n"
      "\n"
      "stage_channels = 16, 32, 48, 64\n"
      "  stage_depths=1,2,1,1  \n"
      "attention = simple\n"
      "lr = 5e-4\n"
      "decay_epochs = 3, 7\n"
      "loss = focal\n"
      "augment_flips = false\n"
      "seed = 42\n");
  CHECK(c.model.stage_channels == std::array<std::int64_t, 4>{16, 32, 48, 64});
  CHECK(c.model.stage_depths == std::array<int, 4>{1, 2, 1, 1});
  CHECK(c.model.attention == AttentionKind::kSimple);
  CHECK(c.train.lr == 5e-4);
  CHECK(c.train.decay_epochs == std::vector<int>{3, 7});
  CHECK(c.train.loss == LossKind::kFocal);
  CHECK_FALSE(c.train.augment_flips);
  CHECK(c.model.seed == 42);
  CHECK(c.train.seed == 42);
  // Untouched keys keep the base values.
  CHECK(c.model.heads == 4);
  CHECK(c.model.decoder_width == 256);

  CHECK(parse_config("decay_epochs =\n").train.decay_epochs.empty());
}

TEST_CASE("round trip through the canonical text") {
  RunConfig c;
  c.model = ModelConfig::tiny();
  c.model.lambda_init = 0.123456789012345;
  c.model.eps = 3e-6;
  c.model.attention = AttentionKind::kSimple;
  c.train.lr = 1.0 / 3.0;
  c.train.decay_epochs = {5};
  c.train.loss = LossKind::kMiou;
  c.train.seed = 99;
  c.model.seed = 7;
  const auto text = to_config_text(c);
  CHECK(parse_config(text) == c);
  CHECK(parse_config(to_config_text(RunConfig{})) == RunConfig{});
  CHECK_FALSE(parse_config(text) == RunConfig{});
}

TEST_CASE("errors name the line") {
  CHECK(error_of("heads = 4\nbogus = 1\n").find("line 2") == 0);
  CHECK(error_of("heads = 4\nbogus = 1\n").find("bogus") != std::string::npos);
  CHECK(error_of("\n\nheads = 4\nheads = 2\n").find("line 4: duplicate key 'heads'") == 0);
  CHECK(error_of("heads four\n").find("line 1") == 0);
  CHECK(error_of("heads = four\n").find("line 1: heads") == 0);
  CHECK(error_of("stage_channels = 16, 32, 48\n").find("line 1") == 0);
  CHECK(error_of("lr = 1e-3x\n").find("line 1") == 0);
  CHECK(error_of("attention = linear\n").find("linear") != std::string::npos);
  CHECK(error_of("augment_flips = maybe\n").find("line 1") == 0);
}

TEST_CASE("names, files and enums") {
  CHECK(resolve_config("default") == RunConfig{});
  CHECK(resolve_config("tiny").model == ModelConfig::tiny());
  const auto file = resolve_config(std::string(GRADFORMER_SOURCE_DIR) + "/configs/tiny.cfg");
  CHECK(file.model == ModelConfig::tiny());
  CHECK(file.train.lr == 1e-3);
  CHECK(resolve_config(std::string(GRADFORMER_SOURCE_DIR) + "/configs/default.cfg").model == ModelConfig::defaults());
  CHECK_THROWS_AS(resolve_config("/nonexistent/config.cfg"), ConfigError);

  CHECK(parse_loss_kind("ce") == LossKind::kCrossEntropy);
  CHECK(parse_loss_kind(to_string(LossKind::kMiou)) == LossKind::kMiou);
  CHECK(parse_attention_kind(to_string(AttentionKind::kDifferential)) == AttentionKind::kDifferential);
  CHECK_THROWS_AS(parse_loss_kind("dice"), ConfigError);
}

TEST_CASE("model invariants") {
  CHECK(ModelConfig::defaults().violations().empty());
  CHECK(ModelConfig::tiny().violations().empty());
  auto c = ModelConfig::tiny();
  c.eps = 1e-3;
  c.upsample_kernel = 2;
  CHECK(c.violations().size() == 2);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::tiny();
  c.heads = 8;  // 16 and 48 are not multiples of 4 * heads = 32
  CHECK(c.violations().size() == 2);
}
