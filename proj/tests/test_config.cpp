#include <gtest/gtest.h>

#include "slsrec/config.hpp"
#include "slsrec/error.hpp"

using namespace slsrec;

TEST(Config, DefaultsValidateAndRoundTrip) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.omega, 5400);
  EXPECT_EQ(c.batch_size, 500);
  EXPECT_DOUBLE_EQ(c.lambda, 0.2);
  EXPECT_EQ(RunConfig::parse(c.to_text()).to_text(), c.to_text());
}

TEST(Config, NonDefaultValuesRoundTrip) {
  RunConfig c;
  c.set("lambda", "0.125");
  c.set("lr", "3e-4");
  c.set("omega", "2h");
  c.set("seed", "18446744073709551615");
  c.set("contrast_projection", "learned_linear");
  c.set("no_cate", "yes");
  c.set("synth_drift", "0.1");
  c.set("data_path", "/tmp/x.csv");
  const RunConfig back = RunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.omega, 7200);
  EXPECT_EQ(back.seed, 18446744073709551615ULL);
  EXPECT_DOUBLE_EQ(back.lr, 3e-4);
  EXPECT_TRUE(back.no_cate);
  EXPECT_EQ(back.contrast_projection, ContrastProjection::kLearnedLinear);
}

TEST(Config, ParseSkipsCommentsAndBlankLines) {
  const RunConfig c = RunConfig::parse("# header\n\n d = 32 \nl=5  # trailing\n");
  EXPECT_EQ(c.d, 32);
  EXPECT_EQ(c.l, 5);
}

TEST(Config, UnknownKeyIsRejected) {
  RunConfig c;
  try {
    c.set("lamda", "0.3");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lamda"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::parse("d=8\nbogus=1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just text\n"), ConfigError);
}

TEST(Config, BadValuesAreRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("d", "eight"), ConfigError);
  EXPECT_THROW(c.set("d", "8.5"), ConfigError);
  EXPECT_THROW(c.set("lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("no_cl", "maybe"), ConfigError);
  EXPECT_THROW(c.set("contrast_projection", "mlp"), ConfigError);
  EXPECT_THROW(c.set("omega", "-5m"), ConfigError);
}

TEST(Duration, Suffixes) {
  EXPECT_EQ(parse_duration("90"), 90);
  EXPECT_EQ(parse_duration("90s"), 90);
  EXPECT_EQ(parse_duration("90m"), 5400);
  EXPECT_EQ(parse_duration("1.5h"), 5400);
  EXPECT_EQ(parse_duration("2d"), 172800);
  EXPECT_THROW(parse_duration(""), ConfigError);
  EXPECT_THROW(parse_duration("m"), ConfigError);
  EXPECT_THROW(parse_duration("10w"), ConfigError);
}

TEST(Config, ValidationRules) {
  auto bad = [](const char* key, const char* value) {
    RunConfig c;
    c.set(key, value);
    EXPECT_THROW(c.validate(), ConfigError) << key << "=" << value;
  };
  bad("d", "0");
  bad("omega", "0");
  bad("batch_size", "0");
  bad("lr", "0");
  bad("eval_candidates", "1");
  bad("n_candidates", "1");
  bad("epochs", "0");
  bad("patience", "-1");
  bad("margin", "-0.5");
  bad("lambda", "-1");

  RunConfig both;
  both.no_long = both.no_short = true;
  EXPECT_THROW(both.validate(), ConfigError);

  RunConfig file;
  file.data_path = "log.csv";
  file.train_end = 100;
  file.val_end = 100;
  EXPECT_THROW(file.validate(), ConfigError);
  file.val_end = 200;
  EXPECT_NO_THROW(file.validate());
}

TEST(Config, DerivedConfigs) {
  RunConfig c;
  c.set("d", "12");
  c.set("share_pool_weights", "true");
  c.set("no_cl", "true");
  const ModelConfig m = c.model(77);
  EXPECT_EQ(m.d, 12);
  EXPECT_EQ(m.item_count, 77);
  EXPECT_TRUE(m.share_pool_weights);
  EXPECT_EQ(c.loss().lambda, 0.0);
  EXPECT_EQ(c.pad().session_len, c.l);
}

TEST(Config, MissingFileIsAnIoError) { EXPECT_THROW(RunConfig::load("/nonexistent/run.cfg"), IoError); }
