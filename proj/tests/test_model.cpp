// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <tuple>

#include "fusion_fixture.hpp"
#include "gradcheck.hpp"
#include "patchfuse/config.hpp"
#include "patchfuse/encoder.hpp"
#include "patchfuse/errors.hpp"
#include "patchfuse/heads.hpp"
#include "patchfuse/model.hpp"
#include "patchfuse/synth.hpp"

using namespace patchfuse;
using namespace patchfuse::testing;

namespace {

ModelConfig tiny_config(const std::string& variant = "full") {
  ModelConfig c = ModelConfig::desk();
  c.d = 8;
  c.heads = 2;
  c.max_length = 8;
  c.dropout = 0.0;
  c.epochs = 1;
  c.variant = variant;
  return c;
}

std::vector<Sample> small_corpus() { return synthetic_corpus({16, 8, 42}); }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("tokenizer lowercases, splits punctuation and keeps underscores") {
  CHECK(split_tokens("Fix buf_len: OOB!") == std::vector<std::string>{"fix", "buf_len", ":", "oob", "!"});
  CHECK(split_tokens("  \t\n").empty());
}

TEST_CASE("vocabulary order: specials, then frequency, then byte order") {
  const Vocabulary v = Vocabulary::build({"b a b", "c a b", "d"}, 2);
  CHECK(v.tokens() == std::vector<std::string>{"[PAD]", "[CLS]", "[UNK]", "b", "a"});
  CHECK(v.id("c") == Vocabulary::kUnk);
  CHECK(vocabulary_from_json(vocabulary_to_json(v)).tokens() == v.tokens());
  CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "b", "c"}), ConfigError);
}

TEST_CASE("tokenize: CLS first, tail truncation, padding") {
  TokenizerSpec spec;
  spec.vocab = Vocabulary::build({"one two three four five"}, 1);
  spec.max_length = 4;
  const TokenizedText t = tokenize("one two three four five", spec);
  CHECK(t.ids.size() == 4);
  CHECK(t.ids[0] == Vocabulary::kCls);
  CHECK(t.tokens == std::vector<std::string>{"[CLS]", "one", "two", "three"});
  CHECK(t.valid_len == 4);
  const TokenizedText s = tokenize("two unseen", spec);
  CHECK(s.valid_len == 3);
  CHECK(s.ids[2] == Vocabulary::kUnk);
  CHECK(s.ids[3] == Vocabulary::kPad);
  const TokenizedText empty = tokenize("", spec);
  CHECK(empty.valid_len == 1);
}

TEST_CASE("sinusoidal positions") {
  const Tensor p = sinusoidal_positions(5, 6);
  for (std::size_t pos = 0; pos < 5; ++pos)
    for (std::size_t i = 0; i < 6; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / 6.0);
      CHECK(p(pos, i) == doctest::Approx(std::sin(angle)).epsilon(1e-14));
      CHECK(p(pos, i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-14));
    }
}

TEST_CASE("micro encoder: shapes, CLS summary, pad rows independent of content") {
  TokenizerSpec spec;
  spec.vocab = Vocabulary::build({"alpha beta gamma delta"}, 1);
  spec.max_length = 6;
  ParameterStore store;
  CounterRng init(3);
  MicroEncoder enc(store, "enc", spec, {8, 2, 2, 0.0, false}, init);
  Tape tape;
  CounterRng rng(1);
  const EncodedSource a = enc.encode_text(tape, "alpha beta", false, rng);
  const EncodedSource b = enc.encode_text(tape, "gamma delta", false, rng);
  CHECK(a.hidden.shape() == Shape{6, 8});
  CHECK(a.summary.shape() == Shape{8});
  CHECK(a.valid_len == 3);
  for (std::size_t c = 0; c < 8; ++c) CHECK(a.summary.value()[c] == a.hidden.value()(0, c));
  for (std::size_t r = 3; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) CHECK(a.hidden.value()(r, c) == b.hidden.value()(r, c));
  CHECK(a.summary.value() != b.summary.value());
  CHECK_THROWS_AS(enc.encode_ids(tape, {1, 2}, 1, false, rng), ShapeError);
}

TEST_CASE("micro encoder gradients match central differences") {
  TokenizerSpec spec;
  spec.vocab = Vocabulary::build({"alpha beta gamma"}, 1);
  spec.max_length = 4;
  ParameterStore store;
  CounterRng init(5);
  MicroEncoder enc(store, "enc", spec, {4, 2, 2, 0.0, true}, init);
  // Nudge the zero-initialized special rows so every path carries gradient.
  CounterRng jitter(6);
  for (double& v : enc.embedding_table().value.data) v += jitter.uniform(-0.3, 0.3);
  auto loss = [&](Tape& t) {
    CounterRng rng(1);
    const EncodedSource e = enc.encode_text(t, "alpha gamma", false, rng);
    return ops::cross_entropy(e.summary, 1);
  };
  const auto r = check_gradients(store, loss);
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("embedding store round-trips and reports missing keys") {
  const auto dir = std::filesystem::temp_directory_path() / "patchfuse_emb_test";
  std::filesystem::remove_all(dir);
  EmbeddingStore store(dir);
  StoredEncoding e{Tensor::matrix({{1, 2}, {3, 4}, {0, 0}}), Tensor::vector({1, 2}), 2};
  store.put("s1", SourceField::patch_add, e);
  store.save_index();
  const EmbeddingStore back = EmbeddingStore::open(dir);
  CHECK(back.get("s1", SourceField::patch_add) == e);
  CHECK(back.contains("s1", SourceField::patch_add));
  CHECK_FALSE(back.contains("s1", SourceField::patch_del));

  PrecomputedEncoder enc(back, 2, 3);
  CHECK(enc.lookup("s1", SourceField::patch_add) == e);
  CHECK_THROWS_AS(enc.lookup("s2", SourceField::patch_add), LookupError);
  PrecomputedEncoder wrong(back, 3, 3);
  CHECK_THROWS_AS(wrong.lookup("s1", SourceField::patch_add), ShapeError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE

TEST_SUITE("fusion") {

TEST_CASE("fuse matches the straight-line reference") {
  for (std::uint64_t seed : {1, 2, 3}) {
    FusionFixture fx(4, 2, 2, seed);
    Tape tape;
    const FusionOutput out = fx.run(tape, false);
    const Vector ref = fx.reference();
    REQUIRE(out.fused.value().size() == 20);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(out.fused.value()[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("fused width is 5d and captured attention rows are distributions") {
  for (auto [d, heads, len] : {std::tuple{4, 1, 3}, {8, 2, 5}, {12, 3, 2}, {16, 4, 4}}) {
    FusionFixture fx(d, heads, len, 9);
    Tape tape;
    const FusionOutput out = fx.run(tape, true);
    CHECK(out.fused.value().size() == 5 * static_cast<std::size_t>(d));
    REQUIRE(out.report_map.has_value());
    const AttentionMap& m = *out.report_map;
    CHECK(m.per_head.shape == Shape{static_cast<std::size_t>(heads), static_cast<std::size_t>(len),
                                    2 * static_cast<std::size_t>(len)});
    for (std::size_t i = 0; i < m.averaged.rows(); ++i) {
      const auto row = m.averaged.row(i);
      CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("fusion rejects mismatched widths and indivisible heads") {
  ParameterStore store;
  CounterRng rng(1);
  CHECK_THROWS_AS(FusionLayer(store, 6, 4, false, rng), ConfigError);
  FusionFixture fx(4, 2, 2, 1);
  Tape tape;
  auto src = [&](Shape s) { return EncodedSource{tape.constant(Tensor(s)), tape.constant(Tensor({s[1]})), s[0]}; };
  CHECK_THROWS_AS(fx.layer.fuse(tape, src({2, 3}), src({2, 4}), src({2, 4}), src({2, 4}), false), ShapeError);
}

TEST_CASE("fusion gradients match central differences") {
  FusionFixture fx(4, 2, 3, 4);
  auto loss = [&](Tape& t) { return ops::cross_entropy(fx.run(t, false).fused, 7); };
  const auto r = check_gradients(fx.store, loss);
  INFO(r.worst);
  CHECK(r.max_rel < 1e-5);
}

}  // TEST_SUITE

TEST_SUITE("heads") {

TEST_CASE("FCN widths") {
  CHECK(FcnSpec::identification(64, 0.3).widths == std::vector<std::size_t>{320, 192, 64, 21, 5, 2});
  CHECK(FcnSpec::type(64, 0.3).widths == std::vector<std::size_t>{320, 192, 64, 21, 12});
  CHECK(FcnSpec::identification(768, 0.3).widths == std::vector<std::size_t>{3840, 2304, 768, 256, 64, 2});
  CHECK(FcnSpec::identification(8, 0.3).widths.back() == 2);
  CHECK(FcnSpec::identification(8, 0.3, 32).input_width() == 32);
  for (std::size_t w : FcnSpec::identification(4, 0.0).widths) CHECK(w >= 1);
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax_lowest({0.2, 0.4, 0.4}) == 1);
  CHECK(argmax_lowest({0.5, 0.5}) == 0);
}

TEST_CASE("hard voting reproduces the exhaustive binary majority table") {
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<std::vector<double>> probs;
    int ones = 0;
    for (int m = 0; m < 3; ++m) {
      const bool one = (mask >> m) & 1;
      ones += one;
      probs.push_back(one ? std::vector<double>{0.3, 0.7} : std::vector<double>{0.8, 0.2});
    }
    const auto [label, shares] = hard_vote(probs);
    CHECK(label == (ones >= 2 ? 1u : 0u));
    CHECK(shares[1] == doctest::Approx(ones / 3.0));
  }
}

TEST_CASE("hard voting over 12 classes: majority, then summed probability, then lowest label") {
  auto member = [](std::size_t label, double conf) {
    std::vector<double> p(12, (1.0 - conf) / 11.0);
    p[label] = conf;
    return p;
  };
  for (std::size_t a = 0; a < 12; ++a)
    for (std::size_t b = 0; b < 12; ++b)
      for (std::size_t c = 0; c < 12; ++c) {
        const auto [label, shares] = hard_vote({member(a, 0.6), member(b, 0.6), member(c, 0.6)});
        std::size_t expected;
        if (a == b || a == c) {
          expected = a;
        } else if (b == c) {
          expected = b;
        } else {
          expected = std::min({a, b, c});  // equal confidence: summed probabilities tie too
        }
        REQUIRE(label == expected);
      }
  const auto [label, shares] = hard_vote({member(0, 0.5), member(4, 0.9), member(7, 0.6)});
  CHECK(label == 4);
  CHECK(shares[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("average voting is the mean distribution") {
  const auto avg = average_vote({{0.2, 0.8}, {0.6, 0.4}, {0.1, 0.9}});
  CHECK(avg[0] == doctest::Approx(0.3));
  CHECK(avg[1] == doctest::Approx(0.7));
}

TEST_CASE("loss helpers agree with the tape cross-entropy") {
  Tape tape;
  const std::vector<Tensor> logits = {Tensor::vector({0.1, 1.2}), Tensor::vector({-0.4, 0.3})};
  std::vector<Var> vars;
  std::vector<std::vector<double>> probs;
  for (const auto& l : logits) {
    vars.push_back(tape.constant(l));
    probs.push_back(kernels::softmax(l).data);
  }
  const double tape_loss = mean_cross_entropy(vars, {1, 0}).value()[0];
  CHECK(tape_loss == doctest::Approx(loss_identification(probs, {1, 0})).epsilon(1e-12));
  const double by_hand = -(std::log(probs[0][1]) + std::log(probs[1][0])) / 2.0;
  CHECK(tape_loss == doctest::Approx(by_hand).epsilon(1e-12));
}

}  // TEST_SUITE

TEST_SUITE("model") {

TEST_CASE("every variant builds with the documented head width") {
  const auto corpus = small_corpus();
  for (const auto& tag : variant_tags()) {
    CAPTURE(tag);
    ModelConfig cfg = tiny_config(tag);
    auto model = Model::create(cfg, corpus);
    const Wiring w = wiring_for(tag);
    const TaskHead& head = model->identification_head();
    if (head.voting()) {
      CHECK(head.member_count() == 3);
      for (std::size_t i = 0; i < 3; ++i) CHECK(head.member(i).spec().input_width() == cfg.d);
    } else {
      CHECK(head.member(0).spec().input_width() == head_input_width(w, cfg.d));
    }
    const ModelOutput out = model->predict(corpus.front());
    CHECK(sum(out.identification.probs) == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(out.type.has_value());
    CHECK(out.type->probs.size() == 12);
    CHECK(sum(out.type->probs) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(head_input_width(wiring_for("CLS"), 8) == 32);
  CHECK(head_input_width(wiring_for("full"), 8) == 40);
  CHECK_THROWS_AS(wiring_for("nope"), ConfigError);
}

TEST_CASE("two-stage prediction emits a type only for predicted positives") {
  const auto corpus = small_corpus();
  auto model = Model::create(tiny_config(), corpus);
  for (const auto& s : corpus) {
    const TwoStageResult r = model->two_stage_predict(s);
    CHECK(r.type.has_value() == (r.flag.label == 1));
    if (r.type) {
      CHECK(*r.cwe_label() >= 1);
      CHECK(*r.cwe_label() <= 12);
    } else {
      CHECK_FALSE(r.cwe_label().has_value());
    }
  }
}

TEST_CASE("save and load reproduce parameters and predictions") {
  const auto dir = std::filesystem::temp_directory_path() / "patchfuse_model_test";
  std::filesystem::create_directories(dir);
  const auto corpus = small_corpus();
  for (Precision p : {Precision::f64, Precision::f32}) {
    ModelConfig cfg = tiny_config();
    cfg.precision = p;
    auto model = Model::create(cfg, corpus);
    model->save(dir / "m.ckpt");
    auto back = Model::load(dir / "m.ckpt");
    CHECK(config_to_json(back->config()) == config_to_json(cfg));
    CHECK(back->text_vocab().tokens() == model->text_vocab().tokens());
    for (const Parameter& param : model->params()) {
      Tensor expected = param.value;
      if (p == Precision::f32) round_to_f32(expected);
      CHECK(back->params().get(param.name).value == expected);
    }
    if (p == Precision::f64) {
      for (const auto& s : corpus) CHECK(back->predict(s).identification.probs == model->predict(s).identification.probs);
    }
  }
  Checkpoint junk;
  junk.header = {{"format", "something-else"}};
  write_checkpoint(dir / "junk.ckpt", junk);
  CHECK_THROWS_AS(Model::load(dir / "junk.ckpt"), SchemaError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("encoder sharing options change the parameter set") {
  const auto corpus = small_corpus();
  ModelConfig base = tiny_config();
  auto names = [&](const ModelConfig& c) {
    std::set<std::string> out;
    auto m = Model::create(c, corpus);
    for (const Parameter& p : m->params()) out.insert(p.name.substr(0, p.name.find('.', p.name.find('.') + 1)));
    (void)m->predict(corpus.front());
    return out;
  };
  const auto plain = names(base);
  CHECK(plain.count("encoder.text"));
  CHECK(plain.count("encoder.code"));
  CHECK_FALSE(plain.count("encoder.message"));
  ModelConfig sep = base;
  sep.separate_message_encoder = true;
  CHECK(names(sep).count("encoder.message"));
  ModelConfig shared = base;
  shared.share_text_code_encoder = true;
  CHECK_FALSE(names(shared).count("encoder.code"));
}

TEST_CASE("precomputed backend feeds stored tensors unchanged") {
  const auto dir = std::filesystem::temp_directory_path() / "patchfuse_precomputed_test";
  std::filesystem::remove_all(dir);
  const auto corpus = small_corpus();
  ModelConfig cfg = tiny_config();
  cfg.text_backend = EncoderBackend::precomputed;
  cfg.code_backend = EncoderBackend::precomputed;
  cfg.embeddings_dir = dir.string();
  {
    EmbeddingStore store(dir);
    CounterRng rng(77);
    for (const auto& s : corpus)
      for (SourceField f : {SourceField::description, SourceField::message, SourceField::patch_add,
                            SourceField::patch_del}) {
        StoredEncoding e{Tensor({cfg.max_length, cfg.d}), Tensor({cfg.d}), 3};
        for (double& v : e.hidden.data) v = rng.uniform(-1, 1);
        for (double& v : e.summary.data) v = rng.uniform(-1, 1);
        store.put(s.id, f, e);
      }
    store.save_index();
  }
  auto model = Model::create(cfg, corpus);
  for (const Parameter& p : model->params()) CHECK(p.name.rfind("encoder.", 0) != 0);
  const EmbeddingStore store = EmbeddingStore::open(dir);
  Tape tape;
  CounterRng rng(1);
  const EncodedSource e = model->encoder_for(SourceField::patch_del).encode(tape, corpus[3], SourceField::patch_del,
                                                                            false, rng);
  const StoredEncoding stored = store.get(corpus[3].id, SourceField::patch_del);
  CHECK(e.hidden.value().data == stored.hidden.data);
  CHECK(e.summary.value().data == stored.summary.data);
  CHECK(sum(model->predict(corpus[3]).identification.probs) == doctest::Approx(1.0));
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
  ModelConfig c = ModelConfig::desk();
  CHECK_NOTHROW(c.validate());
  CHECK(c.d == 64);
  CHECK(c.max_length == 32);
  CHECK(c.heads == 8);
  CHECK(c.batch_size == 8);
  CHECK(c.epochs == 50);
  CHECK(c.seed == 42);
  CHECK(ModelConfig::paper().d == 768);
  CHECK(config_from_json(config_to_json(ModelConfig::paper())).d == 768);
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.variant = "bogus";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.text_backend = EncoderBackend::precomputed;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"d", "sixty-four"}}), ConfigError);
}

}  // TEST_SUITE
