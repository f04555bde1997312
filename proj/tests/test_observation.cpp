#include "doctest.h"

#include <map>
#include <random>

#include "rtop/error.hpp"
#include "rtop/observation.hpp"

using namespace rtop;

namespace {

NodeId img(std::uint32_t n) { return NodeId{NodeType::Image, false, n}; }
NodeId jmp() { return NodeId{NodeType::Jump, false, 1}; }

std::vector<TraceEntry> trace_of(std::size_t n) {
  std::vector<TraceEntry> t;
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back(TraceEntry{img(static_cast<std::uint32_t>(i + 1)), static_cast<std::int64_t>(i),
                           static_cast<double>(i % 3)});
  }
  return t;
}

std::vector<NodeId> ids(std::initializer_list<std::uint32_t> serials) {
  std::vector<NodeId> out;
  for (auto s : serials) out.push_back(img(s));
  return out;
}

// Checks sum-to-one and count conservation level by level.
void check_levels(const std::vector<Connection>& level, std::uint64_t parent_count) {
  if (level.empty()) return;
  double sum = 0.0;
  std::uint64_t children = 0;
  for (const auto& c : level) {
    CHECK(c.count >= 1);
    sum += probability(c, level);
    children += c.count;
    check_levels(c.children, c.count);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(parent_count >= children);
}

}  // namespace

TEST_CASE("append keeps the trace and emits nothing before the window fills") {
  ObservationLearner learner;
  for (int i = 0; i < 3; ++i) CHECK(learner.append(TraceEntry{img(1), i, 0.0}).empty());
  CHECK(learner.trace().size() == 3);
}

TEST_CASE("append rejects a tick that does not increase") {
  ObservationLearner learner;
  learner.append(TraceEntry{img(1), 5, 0.0});
  try {
    learner.append(TraceEntry{img(2), 5, 0.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonMonotonic);
  }
}

TEST_CASE("the sixteenth entry emits one direct path starting at the first entry") {
  ObservationLearner learner;
  std::vector<ObservationPath> emitted;
  for (const auto& e : trace_of(16)) {
    auto out = learner.append(e);
    emitted.insert(emitted.end(), out.begin(), out.end());
  }
  REQUIRE(emitted.size() == 1);
  CHECK(emitted[0].kind == PathKind::Direct);
  CHECK(emitted[0].nodes.size() == 16);
  CHECK(emitted[0].nodes.front() == img(1));
  CHECK(learner.tree(PathKind::Direct, img(1)) != nullptr);
}

TEST_CASE("emit_paths windowing") {
  const WindowConfig cfg;
  SUBCASE("16 nodes give one direct path") {
    const auto paths = emit_paths(trace_of(16), NodeId{}, cfg);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].nodes.front() == img(1));
  }
  SUBCASE("24 nodes give direct paths at offsets 0, 4 and 8") {
    const auto paths = emit_paths(trace_of(24), NodeId{}, cfg);
    REQUIRE(paths.size() == 3);
    CHECK(paths[0].nodes.front() == img(1));
    CHECK(paths[1].nodes.front() == img(5));
    CHECK(paths[2].nodes.front() == img(9));
  }
  SUBCASE("edge deltas are differences of the sampled P_net") {
    const auto t = trace_of(16);
    const auto paths = emit_paths(t, NodeId{}, cfg);
    for (std::size_t i = 1; i < 16; ++i) {
      CHECK(paths[0].deltas[i] == doctest::Approx(t[i].p_net_at - t[i - 1].p_net_at));
    }
  }
}

TEST_CASE("two identical traces fold into single-branch trees with probability one") {
  ObservationLearner learner;
  const auto t = trace_of(16);
  for (int rep = 0; rep < 2; ++rep) {
    for (const auto& p : emit_paths(t, NodeId{}, learner.config())) learner.fold_path(p);
  }
  const auto* tree = learner.tree(PathKind::Direct, img(1));
  REQUIRE(tree);
  const std::vector<Connection>* level = &tree->branches;
  while (!level->empty()) {
    REQUIRE(level->size() == 1);
    CHECK((*level)[0].count == 2);
    CHECK(probability((*level)[0], *level) == 1.0);
    level = &(*level)[0].children;
  }
}

TEST_CASE("jump paths") {
  const WindowConfig cfg;
  SUBCASE("13 nodes give [n1, JMP.5, n7, JMP.5, n13]") {
    const auto paths = build_jump_paths(trace_of(13), jmp(), cfg);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].kind == PathKind::Jump);
    CHECK(paths[0].nodes == std::vector<NodeId>{img(1), jmp(), img(7), jmp(), img(13)});
  }
  SUBCASE("6 nodes give none") { CHECK(build_jump_paths(trace_of(6), jmp(), cfg).empty()); }
  SUBCASE("25 nodes anchor at offsets 0, 4, 8 and 12") {
    const auto paths = build_jump_paths(trace_of(25), jmp(), cfg);
    REQUIRE(paths.size() == 4);
    CHECK(paths[0].nodes.front() == img(1));
    CHECK(paths[1].nodes.front() == img(5));
    CHECK(paths[2].nodes.front() == img(9));
    CHECK(paths[3].nodes.front() == img(13));
    CHECK(paths[0].nodes.size() == 9);  // five raw nodes
  }
  SUBCASE("actions do not anchor") {
    auto t = trace_of(13);
    t[0].node = NodeId{NodeType::Focus, false, 1};
    CHECK(build_jump_paths(t, jmp(), cfg).empty());
  }
}

TEST_CASE("fold_path 7/3 gives probabilities 0.7 and 0.3") {
  ObservationLearner learner;
  for (int i = 0; i < 7; ++i) learner.fold_path(PathKind::Direct, ids({1, 2, 3}), {0, 0, 0});
  for (int i = 0; i < 3; ++i) learner.fold_path(PathKind::Direct, ids({1, 4, 5}), {0, 0, 0});
  const auto* tree = learner.tree(PathKind::Direct, img(1));
  REQUIRE(tree);
  REQUIRE(tree->branches.size() == 2);
  CHECK(tree->branches[0].child == img(2));
  CHECK(probability(tree->branches[0], tree->branches) == doctest::Approx(0.7));
  CHECK(probability(tree->branches[1], tree->branches) == doctest::Approx(0.3));
  CHECK(probability(tree->branches[0].children[0], tree->branches[0].children) == 1.0);

  ObservationLearner single;
  single.fold_path(PathKind::Direct, ids({1, 2, 3}), {0, 0.5, -0.25});
  const auto& b = single.tree(PathKind::Direct, img(1))->branches;
  CHECK(probability(b[0], b) == 1.0);
  CHECK(b[0].mean_delta() == 0.5);
  CHECK(b[0].children[0].mean_delta() == -0.25);
}

TEST_CASE("folded probabilities equal a brute-force frequency count over the path multiset") {
  std::mt19937_64 gen(17);
  ObservationLearner learner;
  std::vector<std::vector<NodeId>> paths;
  for (int i = 0; i < 100; ++i) {
    std::vector<NodeId> p{img(1)};
    const auto len = 2 + gen() % 4;
    for (std::size_t k = 1; k < len; ++k) p.push_back(img(2 + static_cast<std::uint32_t>(gen() % 3)));
    paths.push_back(p);
    learner.fold_path(PathKind::Direct, p, std::vector<double>(p.size(), 0.0));
  }
  // Oracle: number of paths through each prefix.
  std::map<std::vector<NodeId>, std::uint64_t> through;
  for (const auto& p : paths) {
    for (std::size_t k = 1; k <= p.size(); ++k) ++through[std::vector<NodeId>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k))];
  }
  std::size_t checked = 0;
  const auto walk = [&](auto&& self, const std::vector<Connection>& level,
                        std::vector<NodeId> prefix) -> void {
    std::uint64_t continuing = 0;
    for (const auto& c : level) {
      auto child = prefix;
      child.push_back(c.child);
      continuing += through[child];
    }
    for (const auto& c : level) {
      auto child = prefix;
      child.push_back(c.child);
      CHECK(probability(c, level) ==
            doctest::Approx(static_cast<double>(through[child]) / static_cast<double>(continuing)));
      ++checked;
      self(self, c.children, child);
    }
  };
  const auto* tree = learner.tree(PathKind::Direct, img(1));
  REQUIRE(tree);
  walk(walk, tree->branches, {img(1)});
  CHECK(checked > 10);
  check_levels(tree->branches, tree->count);
}

TEST_CASE("trees are per indexing node") {
  ObservationLearner learner;
  learner.fold_path(PathKind::Direct, ids({1, 2, 3, 4}), {0, 0, 0, 0});
  const auto before = *learner.tree(PathKind::Direct, img(1));
  learner.fold_path(PathKind::Direct, ids({4, 3, 2, 1}), {0, 0, 0, 0});
  CHECK(*learner.tree(PathKind::Direct, img(1)) == before);
  CHECK(learner.tree(PathKind::Direct, img(4)) != nullptr);
}

TEST_CASE("folding order does not change the trees") {
  std::mt19937_64 gen(23);
  std::vector<std::pair<std::vector<NodeId>, std::vector<double>>> paths;
  for (int i = 0; i < 60; ++i) {
    std::vector<NodeId> p{img(1 + static_cast<std::uint32_t>(gen() % 2))};
    std::vector<double> d{0.0};
    const auto len = 2 + gen() % 5;
    for (std::size_t k = 1; k < len; ++k) {
      p.push_back(img(1 + static_cast<std::uint32_t>(gen() % 4)));
      d.push_back(static_cast<double>(static_cast<int>(gen() % 21) - 10) / 7.0);
    }
    paths.emplace_back(p, d);
  }
  ObservationLearner a;
  ObservationLearner b;
  for (const auto& [p, d] : paths) a.fold_path(PathKind::Direct, p, d);
  std::shuffle(paths.begin(), paths.end(), gen);
  for (const auto& [p, d] : paths) b.fold_path(PathKind::Direct, p, d);
  CHECK(a.trees(PathKind::Direct) == b.trees(PathKind::Direct));
  for (const auto& [root, tree] : a.trees(PathKind::Direct)) check_levels(tree.branches, tree.count);
}

TEST_CASE("clear_trace empties the trace, keeps trees and restarts the window") {
  ObservationLearner learner;
  const auto t = trace_of(20);
  for (const auto& e : t) learner.append(e);
  const auto trees = learner.trees(PathKind::Direct);
  learner.clear_trace();
  CHECK(learner.trace().empty());
  CHECK(learner.trees(PathKind::Direct) == trees);
  std::vector<ObservationPath> emitted;
  for (std::size_t i = 0; i < 16; ++i) {
    auto out = learner.append(TraceEntry{img(100 + static_cast<std::uint32_t>(i)),
                                         100 + static_cast<std::int64_t>(i), 0.0});
    emitted.insert(emitted.end(), out.begin(), out.end());
  }
  REQUIRE(emitted.size() == 1);
  CHECK(emitted[0].nodes.front() == img(100));
}

TEST_CASE("trace export lists one entry per line") {
  const std::vector<TraceEntry> t{{img(3), 7, 1.5}, {NodeId{NodeType::Speech, false, 2}, 8, -0.25}};
  CHECK(export_trace(t) == "7 IMG.3 p_net=1.5\n8 SPK.2 p_net=-0.25\n");
}
