#include "doctest.h"

#include <random>

#include "rtop/audio.hpp"
#include "rtop/error.hpp"
#include "rtop/generalization.hpp"
#include "support.hpp"

using namespace rtop;
using namespace rtop::testing;

namespace {

ImageData uniform(int l) {
  ImageData img;
  for (auto& p : img.pixels) p.l = static_cast<std::uint8_t>(l);
  return img;
}

NodeId img(std::uint32_t n) { return NodeId{NodeType::Image, false, n}; }

std::vector<NodeId> nodes(std::initializer_list<std::uint32_t> serials) {
  std::vector<NodeId> out;
  for (auto s : serials) out.push_back(img(s));
  return out;
}

std::uint64_t leaf_mass(const ObservationTree& tree) {
  std::uint64_t n = 0;
  for (const auto& p : leaf_paths(tree)) n += p.count;
  return n;
}

// Per-pixel oracle: the lightness deviation bound of a set of raw images around their mean.
double oracle_tol(const std::vector<ImageData>& images, std::size_t i, double slack) {
  double mean = 0.0;
  for (const auto& im : images) mean += im.pixels[i].l;
  mean /= static_cast<double>(images.size());
  double dev = 0.0;
  for (const auto& im : images) dev = std::max(dev, std::abs(im.pixels[i].l - mean));
  return dev + slack;
}

}  // namespace

TEST_CASE("similar_pairs") {
  SUBCASE("one differing position") {
    ObservationLearner learner;
    learner.fold_path(PathKind::Direct, nodes({1, 11, 2, 3}), {0, 0, 0, 0});
    learner.fold_path(PathKind::Direct, nodes({1, 12, 2, 3}), {0, 0, 0, 0});
    const auto pairs = similar_pairs(*learner.tree(PathKind::Direct, img(1)));
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].a == nodes({1, 11, 2, 3}));
    CHECK(pairs[0].b == nodes({1, 12, 2, 3}));
    CHECK(pairs[0].diff == std::vector<std::size_t>{1});
  }
  SUBCASE("identical paths fold into one leaf and pair with nothing") {
    ObservationLearner learner;
    learner.fold_path(PathKind::Direct, nodes({1, 2, 3}), {0, 0, 0});
    learner.fold_path(PathKind::Direct, nodes({1, 2, 3}), {0, 0, 0});
    CHECK(similar_pairs(*learner.tree(PathKind::Direct, img(1))).empty());
  }
  SUBCASE("three of eight positions exceed d_max = 1") {
    CHECK(d_max(8) == 1);
    ObservationLearner learner;
    learner.fold_path(PathKind::Direct, nodes({1, 2, 3, 4, 5, 6, 7, 8}), std::vector<double>(8, 0.0));
    learner.fold_path(PathKind::Direct, nodes({1, 12, 13, 14, 5, 6, 7, 8}), std::vector<double>(8, 0.0));
    CHECK(similar_pairs(*learner.tree(PathKind::Direct, img(1))).empty());
  }
  SUBCASE("a sensory and an action node at the same position do not pair") {
    ObservationLearner learner;
    learner.fold_path(PathKind::Direct, nodes({1, 2, 3}), {0, 0, 0});
    learner.fold_path(PathKind::Direct, {img(1), NodeId{NodeType::Speech, false, 1}, img(3)}, {0, 0, 0});
    CHECK(similar_pairs(*learner.tree(PathKind::Direct, img(1))).empty());
  }
  SUBCASE("paths of different length do not pair") {
    ObservationLearner learner;
    learner.fold_path(PathKind::Direct, nodes({1, 2, 3}), {0, 0, 0});
    learner.fold_path(PathKind::Direct, nodes({1, 4}), {0, 0});
    CHECK(similar_pairs(*learner.tree(PathKind::Direct, img(1))).empty());
  }
}

TEST_CASE("merge_images") {
  const GeneralizationConfig cfg;
  SUBCASE("an image merged with itself keeps its centers with slack tolerance everywhere") {
    const ImageData a = encode_full(bush_scene(Bushes::Left));
    const auto m = merge_images(a, img(1), a, img(2), cfg);
    REQUIRE(m);
    CHECK(m->must_match_count() == kImagePixels);
    for (std::size_t i = 0; i < kImagePixels; ++i) {
      CHECK(m->pixels[i].l == a.pixels[i].l);
      CHECK(m->pixels[i].l_tol == cfg.image_slack);
    }
    CHECK(m->provenance.size() == 2);
  }
  SUBCASE("left and right bushes leave a don't-care region over both bush areas") {
    const ImageData left = encode_full(bush_scene(Bushes::Left));
    const ImageData right = encode_full(bush_scene(Bushes::Right));
    const auto m = merge_images(left, img(1), right, img(2), cfg);
    REQUIRE(m);
    for (std::size_t i = 0; i < kImagePixels; ++i) {
      const bool differs = left.pixels[i].l != right.pixels[i].l;
      CHECK(m->pixels[i].l_tol == doctest::Approx(oracle_tol({left, right}, i, cfg.image_slack)));
      CHECK(m->pixels[i].must_match == !differs);
    }
    CHECK(match_image_masked(left, *m));
    CHECK(match_image_masked(right, *m));
    CHECK(match_image_masked(encode_full(bush_scene(Bushes::Both)), *m));
    CHECK_FALSE(match_image_masked(uniform(7), *m));
  }
  SUBCASE("black and white share no must-match pixel and are rejected") {
    CHECK_FALSE(merge_images(uniform(0), img(1), uniform(7), img(2), cfg));
  }
  SUBCASE("merging into a merged node recomputes from the provenance") {
    const auto m = merge_images(uniform(3), img(1), uniform(4), img(2), cfg);
    REQUIRE(m);
    const auto m2 = merge_images(*m, NodeId{NodeType::Image, true, 1}, uniform(5), img(3), cfg);
    REQUIRE(m2);
    CHECK(m2->provenance.size() == 3);
    CHECK(m2->pixels[0].l == doctest::Approx(4.0));
    CHECK(m2->pixels[0].l_tol == doctest::Approx(1.0 + cfg.image_slack));
  }
}

TEST_CASE("mask soundness: every source masked-matches its merged node") {
  std::mt19937_64 gen(5);
  const GeneralizationConfig cfg;
  std::size_t accepted = 0;
  for (int trial = 0; trial < 40; ++trial) {
    ImageData base;
    for (auto& p : base.pixels) p.l = static_cast<std::uint8_t>(gen() % 8);
    std::vector<ImageData> sources;
    const auto n = 2 + gen() % 5;
    for (std::size_t k = 0; k < n; ++k) {
      ImageData v = base;
      for (auto& p : v.pixels) {
        if (gen() % 10 == 0) p.l = static_cast<std::uint8_t>(gen() % 8);
      }
      sources.push_back(v);
    }
    std::optional<ImageMergedData> m =
        merge_images(sources[0], img(1), sources[1], img(2), cfg);
    for (std::size_t k = 2; m && k < n; ++k) {
      m = merge_images(*m, NodeId{NodeType::Image, true, 1}, sources[k],
                       img(static_cast<std::uint32_t>(k + 1)), cfg);
    }
    if (!m) continue;
    ++accepted;
    for (const auto& s : sources) CHECK(match_image_masked(s, *m));
  }
  CHECK(accepted > 30);
}

TEST_CASE("property extraction: must-match pixels concentrate on the shared region") {
  std::mt19937_64 gen(9);
  const GeneralizationConfig cfg;
  // Shared striped top half, random bottom half.
  std::vector<ImageData> images;
  for (int k = 0; k < 6; ++k) {
    ImageData im;
    for (std::size_t i = 0; i < kImagePixels; ++i) {
      const std::size_t row = i / kImageSide;
      im.pixels[i].l = row < kImageSide / 2 ? static_cast<std::uint8_t>((row / 4) % 2 ? 6 : 1)
                                             : static_cast<std::uint8_t>(gen() % 8);
    }
    images.push_back(im);
  }
  auto m = merge_images(images[0], img(1), images[1], img(2), cfg);
  for (std::size_t k = 2; m && k < images.size(); ++k) {
    m = merge_images(*m, NodeId{NodeType::Image, true, 1}, images[k],
                     img(static_cast<std::uint32_t>(k + 1)), cfg);
  }
  REQUIRE(m);
  std::size_t top = 0;
  std::size_t bottom = 0;
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    if (!m->pixels[i].must_match) continue;
    (i / kImageSide < kImageSide / 2 ? top : bottom) += 1;
  }
  CHECK(top == kImagePixels / 2);
  CHECK(bottom < kImagePixels / 20);
}

TEST_CASE("merge_audio") {
  const MatchConfig match;
  const GeneralizationConfig cfg;
  SUBCASE("identical audio gives the shared summary and the relative slack") {
    const AudioData a = sine(440.0, 40.0);
    const auto s = audio_summary(a);
    const auto m = merge_audio(a, NodeId{NodeType::Audio, false, 1}, a,
                               NodeId{NodeType::Audio, false, 2}, match, cfg);
    REQUIRE(m);
    CHECK(m->center.var_amplitude == doctest::Approx(s.var_amplitude));
    CHECK(m->center.mean_cross_rate == doctest::Approx(s.mean_cross_rate));
    CHECK(m->tol.var_amplitude == doctest::Approx(cfg.audio_relative_slack * s.var_amplitude));
    CHECK(m->tol.mean_cross_rate == doctest::Approx(cfg.audio_relative_slack * s.mean_cross_rate));
  }
  SUBCASE("two voices differing 20% in variance widen the variance tolerance") {
    const AudioData a = sine(440.0, 40.0);
    const AudioData b = sine(440.0, 40.0 * std::sqrt(1.2));
    const auto sa = audio_summary(a);
    const auto sb = audio_summary(b);
    CHECK(sb.var_amplitude / sa.var_amplitude == doctest::Approx(1.2).epsilon(0.02));
    const auto m = merge_audio(a, NodeId{NodeType::Audio, false, 1}, b,
                               NodeId{NodeType::Audio, false, 2}, match, cfg);
    REQUIRE(m);
    const double center = (sa.var_amplitude + sb.var_amplitude) / 2.0;
    const double dev = std::abs(sa.var_amplitude - center);
    CHECK(m->center.var_amplitude == doctest::Approx(center));
    CHECK(m->tol.var_amplitude == doctest::Approx(dev + cfg.audio_relative_slack * center));
    CHECK(m->tol.var_amplitude > cfg.audio_relative_slack * center);
    CHECK(match_audio_merged(sa, *m));
    CHECK(match_audio_merged(sb, *m));
  }
  SUBCASE("silence and loud noise are rejected") {
    CHECK_FALSE(merge_audio(silence(), NodeId{NodeType::Audio, false, 1}, noise(3, 100.0),
                            NodeId{NodeType::Audio, false, 2}, match, cfg));
  }
}

TEST_CASE("merge_focus averages nearby moves and rejects distant ones") {
  const GeneralizationConfig cfg;
  const auto m = merge_focus(FocusAction{4, 0, 0}, FocusAction{8, 2, 0}, cfg);
  REQUIRE(m);
  CHECK(m->dx == doctest::Approx(6.0));
  CHECK(m->dy == doctest::Approx(1.0));
  CHECK(m->tol == doctest::Approx(2.0));
  CHECK(m->accepts(FocusAction{5, 1, 0}));
  CHECK_FALSE(merge_focus(FocusAction{-32, 0, 0}, FocusAction{32, 0, 0}, cfg));
}

TEST_CASE("make_group") {
  MemoryStore store;
  const MatchConfig match;
  const GeneralizationConfig cfg;
  const auto john = store.put(token_waveform(0), 0);
  const auto andy = store.put(token_waveform(1), 0);
  const auto will = store.put(token_waveform(2), 0);
  SUBCASE("a group of names accepts any name and nothing else") {
    const auto g = make_group(store, {john, andy, will}, 1, cfg);
    CHECK(g.type == NodeType::Group);
    const auto& spec = std::get<GroupSpec>(store.get(g).payload);
    CHECK_FALSE(spec.is_wildcard);
    CHECK(group_accepts(store, spec, token_waveform(2), match));
    CHECK_FALSE(group_accepts(store, spec, token_waveform(3), match));
    // Every member conforms.
    for (auto m : spec.members) CHECK(group_accepts(store, spec, store.get(m).payload, match));
    // Building it again reuses the stored group.
    CHECK(make_group(store, {will, john, andy}, 2, cfg) == g);
  }
  SUBCASE("a single distinct member is a precondition failure") {
    try {
      make_group(store, {john, john}, 1, cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Precondition);
    }
  }
  SUBCASE("eight members across two types form a wildcard group") {
    std::vector<NodeId> members{john, andy, will, store.put(token_waveform(3), 0)};
    for (int l = 0; l < 4; ++l) members.push_back(store.put(uniform(l), 0));
    const auto g = make_group(store, members, 1, cfg);
    const auto& spec = std::get<GroupSpec>(store.get(g).payload);
    CHECK(spec.is_wildcard);
    CHECK(group_accepts(store, spec, uniform(7), match));
    // Seven members or a single type stay ordinary groups.
    members.pop_back();
    CHECK_FALSE(std::get<GroupSpec>(store.get(make_group(store, members, 1, cfg)).payload).is_wildcard);
    std::vector<NodeId> audio;
    for (std::size_t s = 0; s < 8; ++s) audio.push_back(store.put(token_waveform(s + 4), 0));
    CHECK_FALSE(std::get<GroupSpec>(store.get(make_group(store, audio, 1, cfg)).payload).is_wildcard);
  }
  SUBCASE("a group member that is itself a group is flattened") {
    const auto g = make_group(store, {john, andy}, 1, cfg);
    const auto g2 = make_group(store, {g, will}, 2, cfg);
    CHECK(std::get<GroupSpec>(store.get(g2).payload).members == std::vector<NodeId>{john, andy, will});
  }
}

TEST_CASE("rewrite_paths sums counts and deltas and conserves mass") {
  ObservationLearner learner;
  for (int i = 0; i < 3; ++i) learner.fold_path(PathKind::Direct, nodes({1, 11, 2}), {0, 0.5, 0.25});
  for (int i = 0; i < 2; ++i) learner.fold_path(PathKind::Direct, nodes({1, 12, 2}), {0, -1.0, 0.25});
  for (int i = 0; i < 5; ++i) learner.fold_path(PathKind::Direct, nodes({1, 20}), {0, 0});
  auto& tree = learner.mutable_trees(PathKind::Direct).at(img(1));
  const auto mass = leaf_mass(tree);
  const auto pairs = similar_pairs(tree);
  REQUIRE(pairs.size() == 1);
  const NodeId merged{NodeType::Image, true, 13};
  rewrite_paths(tree, pairs[0], {merged});
  CHECK(leaf_mass(tree) == mass);
  REQUIRE(tree.branches.size() == 2);
  const auto& via = tree.branches[0].child == merged ? tree.branches[0] : tree.branches[1];
  CHECK(via.child == merged);
  CHECK(via.count == 5);
  CHECK(via.mean_delta() == doctest::Approx((3 * 0.5 - 2 * 1.0) / 5.0));
  CHECK(probability(via, tree.branches) == doctest::Approx(0.5));
  REQUIRE(via.children.size() == 1);
  CHECK(via.children[0].child == img(2));
  CHECK(via.children[0].count == 5);
  double sum = 0.0;
  for (const auto& c : tree.branches) sum += probability(c, tree.branches);
  CHECK(sum == doctest::Approx(1.0));
  CHECK_THROWS_AS(rewrite_paths(tree, pairs[0], {}), Error);
}

TEST_CASE("run_generalization") {
  MemoryStore store;
  ObservationLearner learner;
  const MatchConfig match;
  const GeneralizationConfig cfg;

  SUBCASE("no similar pairs gives an empty report and still clears the trace") {
    const auto a = store.put(uniform(1), 0);
    const auto b = store.put(uniform(6), 0);
    learner.append(TraceEntry{a, 0, 0.0});
    learner.append(TraceEntry{b, 1, 0.0});
    learner.fold_path(PathKind::Direct, {a, b}, {0, 0});
    const auto report = run_generalization(store, learner, match, cfg, 2);
    CHECK(report.empty());
    CHECK(learner.trace().empty());
    CHECK(learner.touched().empty());
  }

  SUBCASE("the bush-left and bush-right paths reduce onto one merged node") {
    const auto lead = store.put(encode_full(scene(64, 1, {{8, 8, 48, 16, 6}})), 0);
    const auto left = store.put(encode_full(bush_scene(Bushes::Left)), 0);
    const auto right = store.put(encode_full(bush_scene(Bushes::Right)), 0);
    const auto tail = store.put(encode_full(scene(64, 6, {{0, 40, 64, 24, 1}})), 0);
    for (int i = 0; i < 3; ++i) learner.fold_path(PathKind::Direct, {lead, left, tail}, {0, 0, 0});
    for (int i = 0; i < 2; ++i) learner.fold_path(PathKind::Direct, {lead, right, tail}, {0, 0, 0});
    const auto report = run_generalization(store, learner, match, cfg, 10);
    CHECK(report.pairs_reduced == 1);
    CHECK(report.merged_created == 1);
    REQUIRE(report.created.size() == 1);
    const NodeId m = report.created[0];
    CHECK(m == NodeId{NodeType::Image, true, 1});
    CHECK(report.lines.at(0) == "Attempting reduction of path-pair: IMG.1->IMG.2->IMG.4 / IMG.1->IMG.3->IMG.4");
    CHECK(report.lines.at(1) == "Created merged node IMG.M.1 by merging IMG.2 and IMG.3");
    CHECK(report.lines.back() == "Retired 2 nodes: IMG.2,IMG.3");
    CHECK(report.retired_ids == std::vector<NodeId>{left, right});
    CHECK_FALSE(store.contains(left));
    CHECK_FALSE(store.contains(right));

    const auto* tree = learner.tree(PathKind::Direct, lead);
    REQUIRE(tree);
    REQUIRE(tree->branches.size() == 1);
    CHECK(tree->branches[0].child == m);
    CHECK(tree->branches[0].count == 5);

    const auto& merged = std::get<ImageMergedData>(store.get(m).payload);
    for (const auto& src : merged.provenance) CHECK(match_image_masked(src.image, merged));
    CHECK(match_image_masked(encode_full(bush_scene(Bushes::Both)), merged));

    SUBCASE("a second pass with nothing new reducible reports nothing") {
      learner.fold_path(PathKind::Direct, {lead, m, tail}, {0, 0, 0});
      CHECK(run_generalization(store, learner, match, cfg, 11).empty());
    }
  }

  SUBCASE("three name sentences reduce onto a group") {
    std::map<std::string, NodeId> w;
    std::size_t slot = 0;
    for (const auto* list : {&sentence_head(), &sentence_names(), &sentence_tail()}) {
      for (const auto& word : *list) w[word] = store.put(token_waveform(slot++), 0);
    }
    for (const auto& name : sentence_names()) {
      learner.fold_path(PathKind::Direct,
                        {w["A_BOY"], w["NAMED"], w[name], w["WENT"], w["TO_A"], w["PARK"]},
                        std::vector<double>(6, 0.0));
    }
    const auto report = run_generalization(store, learner, match, cfg, 200);
    CHECK(report.merged_created == 0);
    CHECK(report.groups_created >= 1);
    const auto* tree = learner.tree(PathKind::Direct, w["A_BOY"]);
    REQUIRE(tree);
    const auto paths = leaf_paths(*tree);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].count == 3);
    const NodeId g = paths[0].nodes[2];
    REQUIRE(g.type == NodeType::Group);
    const auto& spec = std::get<GroupSpec>(store.get(g).payload);
    CHECK(spec.members == std::vector<NodeId>{w["JOHN"], w["ANDY"], w["WILL"]});
    CHECK(group_accepts(store, spec, token_waveform(4), match));  // WILL
    CHECK_FALSE(group_accepts(store, spec, store.get(w["PARK"]).payload, match));
    CHECK(paths[0].nodes[3] == w["WENT"]);
    // Only the final group survives.
    CHECK(store.ids_of(NodeType::Group, false) == std::vector<NodeId>{g});
  }
}
