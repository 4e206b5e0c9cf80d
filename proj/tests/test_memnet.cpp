#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "knnseq/memnet.hpp"
#include "testutil.hpp"

using knnseq::BatchTargets;
using knnseq::MemNetConfig;
using knnseq::MemNetModel;
using knnseq::ModelKind;
using knnseq::RngStream;
using knnseq::diff::Mode;
using knnseq::diff::Tensor;
namespace ops = knnseq::diff;

namespace {

MemNetConfig small_config(std::size_t d = 4, std::size_t classes = 3, std::size_t k = 2,
                          std::size_t slots = 4, std::size_t embed = 6) {
  MemNetConfig cfg;
  cfg.d = d;
  cfg.classes = classes;
  cfg.k = k;
  cfg.slots = slots;
  cfg.embed = embed;
  cfg.dropout_rate = 0.0;
  return cfg;
}

void set_identity(MemNetModel& model, const std::string& name) {
  for (auto& [n, t] : model.named_parameters()) {
    if (n == name) {
      std::fill(t.values().begin(), t.values().end(), 0.0);
      const std::size_t cols = t.shape()[1];
      for (std::size_t j = 0; j < std::min(t.shape()[0], cols); ++j) {
        t.values()[j * cols + j] = 1.0;
      }
      return;
    }
  }
  FAIL("no parameter named ", name);
}

void set_zero(MemNetModel& model, const std::string& name) {
  for (auto& [n, t] : model.named_parameters()) {
    if (n == name) {
      std::fill(t.values().begin(), t.values().end(), 0.0);
      return;
    }
  }
  FAIL("no parameter named ", name);
}

Tensor random_matrix(std::size_t m, std::size_t d, std::uint64_t seed) {
  RngStream rng = RngStream::derive(seed, "mem-fixture");
  std::vector<double> v(m * d);
  for (auto& x : v) x = 2.0 * rng.next_double() - 1.0;
  return Tensor({m, d}, std::move(v));
}

BatchTargets fixture_targets(std::size_t d, std::size_t classes, std::size_t k,
                             std::uint64_t seed) {
  knnseq::NeighborTargets nt;
  nt.n = 1;
  nt.k = k;
  nt.d = d;
  RngStream rng = RngStream::derive(seed, "mem-targets");
  nt.labels.resize(k);
  nt.vectors.resize(k * d);
  nt.distances.resize(k, 0.0);
  for (auto& l : nt.labels) l = static_cast<int>(rng.next_index(classes));
  for (auto& v : nt.vectors) v = 2.0 * rng.next_double() - 1.0;
  return knnseq::make_batch_targets(nt, {static_cast<int>(rng.next_index(classes))}, {0}, classes);
}

}  // namespace

TEST_CASE("memory embedding") {
  SUBCASE("zero input embedding makes attention uniform") {
    MemNetModel model(ModelKind::mnknn, small_config(), 1);
    set_zero(model, "input_embed");
    Tensor memory = random_matrix(4, 4, 5);
    Tensor query = random_matrix(1, 4, 6);
    auto out = model.forward(query, memory, Mode::eval);
    for (const auto& p : out.attentions) {
      for (double v : p.values()) CHECK(v == doctest::Approx(0.25));
    }
  }
  SUBCASE("a single slot receives all attention") {
    MemNetModel model(ModelKind::mnknn, small_config(4, 3, 2, 1, 6), 2);
    auto out = model.forward(random_matrix(1, 4, 7), random_matrix(1, 4, 8), Mode::eval);
    for (const auto& p : out.attentions) {
      REQUIRE(p.size() == 1);
      CHECK(p.values()[0] == doctest::Approx(1.0));
    }
  }
  SUBCASE("identity embedding reproduces the memory rows") {
    MemNetModel model(ModelKind::mnknn, small_config(4, 3, 2, 3, 4), 3);  // e == d
    set_identity(model, "input_embed");
    Tensor memory = random_matrix(3, 4, 9);
    auto embedded = model.embed_memory(memory);
    CHECK(embedded.keys.values() == memory.values());
  }
}

TEST_CASE("hop mechanics") {
  SUBCASE("hand-evaluated two-slot attention") {
    // d = e = 2, all embeddings identity: u = query, keys = memory rows
    MemNetModel model(ModelKind::mnknn, small_config(2, 2, 1, 2, 2), 4);
    set_identity(model, "input_embed");
    set_identity(model, "output_embed");
    set_identity(model, "query_embed");
    set_zero(model, "hop_map");
    Tensor memory({2, 2}, {1, 0, 0, 1});
    Tensor query({1, 2}, {1, 0});  // dot products: 1 and 0
    auto mem = model.embed_memory(memory);
    auto u = model.embed_query(query);
    auto hop = model.hop(u, mem);
    const double e = std::exp(1.0);
    CHECK(hop.attention.values()[0] == doctest::Approx(e / (e + 1.0)));
    CHECK(hop.attention.values()[1] == doctest::Approx(1.0 / (e + 1.0)));
    // o = p1*c1 + p2*c2 with c = memory rows
    CHECK(hop.read.values()[0] == doctest::Approx(e / (e + 1.0)));
    CHECK(hop.read.values()[1] == doctest::Approx(1.0 / (e + 1.0)));
    // H = 0 so the next state is exactly the read vector
    CHECK(hop.state.values() == hop.read.values());
  }
  SUBCASE("equal memory slots give uniform attention and the mean read") {
    MemNetModel model(ModelKind::mnknn, small_config(3, 2, 2, 4, 5), 5);
    std::vector<double> rows(4 * 3);
    for (std::size_t r = 0; r < 4; ++r) {
      rows[r * 3] = 0.3;
      rows[r * 3 + 1] = -0.1;
      rows[r * 3 + 2] = 0.9;
    }
    Tensor memory({4, 3}, std::move(rows));
    auto mem = model.embed_memory(memory);
    auto u = model.embed_query(random_matrix(1, 3, 10));
    auto hop = model.hop(u, mem);
    for (double v : hop.attention.values()) CHECK(v == doctest::Approx(0.25));
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(hop.read.values()[j] == doctest::Approx(mem.values.values()[j]));
    }
  }
}

TEST_CASE("label and vector heads per hop") {
  MemNetConfig cfg = small_config(3, 3, 2, 4, 3);  // e == d for identity wiring
  SUBCASE("zero label head gives the uniform distribution per hop and overall") {
    MemNetModel model(ModelKind::mnknn, cfg, 6);
    set_zero(model, "label_head.w");
    set_zero(model, "label_head.b");
    auto out = model.forward(random_matrix(1, 3, 11), random_matrix(4, 3, 12), Mode::eval);
    REQUIRE(out.bundle.step_labels.size() == 2);
    for (const auto& step : out.bundle.step_labels) {
      for (double v : step.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
    }
    for (double v : out.bundle.final_label.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("k=1 equates the final and only hop label") {
    MemNetModel model(ModelKind::mnknn, small_config(3, 3, 1, 4, 3), 7);
    auto out = model.forward(random_matrix(1, 3, 13), random_matrix(4, 3, 14), Mode::eval);
    REQUIRE(out.bundle.step_labels.size() == 1);
    CHECK(out.bundle.final_label.values() == out.bundle.step_labels[0].values());
  }
  SUBCASE("label head matches the softmax closed form on a hand-set state") {
    MemNetModel model(ModelKind::mnknn, cfg, 8);
    set_identity(model, "label_head.w");
    set_zero(model, "label_head.b");
    Tensor state({1, 3}, {0.5, -0.25, 0.0});
    auto p = model.label_head(state);
    const double tau = cfg.tau;
    double denom = 0.0;
    for (double z : state.values()) denom += std::exp(z / tau);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(p.values()[j] == doctest::Approx(std::exp(state.values()[j] / tau) / denom));
    }
  }
  SUBCASE("vector head clamps negatives before the output map") {
    MemNetModel model(ModelKind::mnknn_vec, cfg, 9);
    set_identity(model, "vector_head.t");
    set_identity(model, "vector_head.w");
    set_zero(model, "vector_head.b");
    Tensor state({1, 3}, {0.7, -0.5, 0.2});
    auto out = model.vector_head(state);
    CHECK(out.values()[0] == doctest::Approx(0.7));
    CHECK(out.values()[1] == doctest::Approx(0.0));
    CHECK(out.values()[2] == doctest::Approx(0.2));
  }
  SUBCASE("zero vector head outputs zero") {
    MemNetModel model(ModelKind::mnknn_vec, cfg, 10);
    set_zero(model, "vector_head.t");
    set_zero(model, "vector_head.w");
    set_zero(model, "vector_head.b");
    auto out = model.vector_head(random_matrix(1, 3, 15));
    for (double v : out.values()) CHECK(v == doctest::Approx(0.0));
  }
  SUBCASE("mnknn has no vector head") {
    MemNetModel model(ModelKind::mnknn, cfg, 11);
    CHECK_THROWS_AS(model.vector_head(random_matrix(1, 3, 16)), std::logic_error);
  }
}

TEST_CASE("forward structure") {
  MemNetConfig cfg = small_config(4, 3, 3, 5, 6);
  MemNetModel model(ModelKind::mnknn_vec, cfg, 12);
  Tensor query = random_matrix(1, 4, 17);
  Tensor memory = random_matrix(5, 4, 18);
  auto out = model.forward(query, memory, Mode::eval);

  SUBCASE("exactly k hops, k label heads, k attentions") {
    CHECK(out.attentions.size() == 3);
    CHECK(out.bundle.step_labels.size() == 3);
    CHECK(out.bundle.step_vectors.size() == 3);
  }
  SUBCASE("final label is the mean of hops and every attention is a distribution") {
    for (std::size_t j = 0; j < out.bundle.final_label.size(); ++j) {
      double mean = 0.0;
      for (const auto& s : out.bundle.step_labels) mean += s.values()[j];
      CHECK(out.bundle.final_label.values()[j] == doctest::Approx(mean / 3.0));
    }
    for (const auto& p : out.attentions) {
      double sum = 0.0;
      for (double v : p.values()) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
  SUBCASE("layer-shared embeddings appear exactly once in the parameter list") {
    std::size_t input_count = 0, output_count = 0;
    for (const auto& [name, t] : model.named_parameters()) {
      input_count += name == "input_embed";
      output_count += name == "output_embed";
    }
    CHECK(input_count == 1);
    CHECK(output_count == 1);
    CHECK(model.named_parameters().size() == 9);
  }
  SUBCASE("permuting memory slots permutes attention and preserves everything else") {
    Tensor permuted({5, 4}, [&] {
      std::vector<double> rows(5 * 4);
      const std::size_t perm[5] = {3, 0, 4, 1, 2};
      for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t j = 0; j < 4; ++j) rows[r * 4 + j] = memory.values()[perm[r] * 4 + j];
      }
      return rows;
    }());
    auto moved = model.forward(query, permuted, Mode::eval);
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t r = 0; r < 5; ++r) {
        CHECK(moved.attentions[t].values()[r] ==
              doctest::Approx(out.attentions[t].values()[perm[r]]).epsilon(1e-9));
      }
      for (std::size_t j = 0; j < out.bundle.step_labels[t].size(); ++j) {
        CHECK(moved.bundle.step_labels[t].values()[j] ==
              doctest::Approx(out.bundle.step_labels[t].values()[j]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("memnet losses") {
  MemNetConfig cfg = small_config(4, 3, 2, 4, 6);
  MemNetModel model(ModelKind::mnknn_vec, cfg, 13);
  auto out = model.forward(random_matrix(1, 4, 19), random_matrix(4, 4, 20), Mode::eval);
  BatchTargets bt = fixture_targets(4, 3, 2, 21);

  SUBCASE("lambda = 0 reduces the combined loss to the label loss") {
    CHECK(knnseq::loss_mnknn_vec(out.bundle, bt, 9.5, 0.0).item() ==
          doctest::Approx(knnseq::loss_mnknn(out.bundle, bt, 9.5).item()));
  }
  SUBCASE("fixed fixture recombines the sub-losses") {
    const double l1 = knnseq::loss_mnknn(out.bundle, bt, 9.5).item();
    const double l2 = knnseq::vector_sequence_loss(out.bundle, bt).item();
    CHECK(knnseq::loss_mnknn_vec(out.bundle, bt, 9.5, 0.12).item() ==
          doctest::Approx(l1 + 0.12 * l2).epsilon(1e-12));
  }
}

TEST_CASE("mnknn_vec gradient check on the micro fixture") {
  MemNetConfig cfg = small_config(4, 3, 2, 4, 6);
  cfg.dropout_rate = 0.2;
  MemNetModel model(ModelKind::mnknn_vec, cfg, 14);
  Tensor query = random_matrix(1, 4, 22);
  Tensor memory = random_matrix(4, 4, 23);
  BatchTargets bt = fixture_targets(4, 3, 2, 24);
  std::vector<Tensor> params;
  for (auto& [n, t] : model.named_parameters()) params.push_back(t);
  auto fwd = [&] {
    RngStream drop = RngStream::derive(25, "mem-gc");
    auto out = model.forward(query, memory, Mode::train, &drop);
    return knnseq::loss_mnknn_vec(out.bundle, bt, 9.5, 0.12);
  };
  CHECK(testutil::max_grad_rel_error(fwd, params) < 1e-4);
}

TEST_CASE("memory slot draws") {
  RngStream rng = RngStream::derive(26, "slots");
  auto slots = knnseq::draw_memory_slots(100, 10, rng, 42);
  CHECK(slots.size() == 10);
  std::vector<bool> seen(100, false);
  for (auto s : slots) {
    CHECK(s != 42);
    CHECK(!seen[s]);
    seen[s] = true;
  }
  RngStream again = RngStream::derive(26, "slots");
  CHECK(knnseq::draw_memory_slots(100, 10, again, 42) == slots);
}
