#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "mmda/dataset.hpp"
#include "mmda/error.hpp"
#include "test_support.hpp"

namespace mmda {
namespace {

ToySpec small_spec() {
  ToySpec spec;
  spec.class_count = 3;
  spec.samples_per_class_per_domain = 4;
  spec.image_side = 16;
  spec.seed = 5;
  spec.domains = {domain_style_preset("clean"), domain_style_preset("inverted_noise")};
  return spec;
}

TEST(Dataset, RenderIsDeterministic) {
  const auto style = domain_style_preset("inverted_noise");
  EXPECT_EQ(render_toy_image(2, style, 24, 99), render_toy_image(2, style, 24, 99));
  EXPECT_NE(render_toy_image(2, style, 24, 99), render_toy_image(2, style, 24, 100));
  EXPECT_TRUE(render_toy_image(0, style, 24, 1).valid());
}

TEST(Dataset, ClassesRenderDifferently) {
  const auto style = domain_style_preset("clean");
  EXPECT_NE(checksum(render_toy_image(0, style, 32, 1)), checksum(render_toy_image(1, style, 32, 1)));
}

TEST(Dataset, InvertedDomainFlipsPolarity) {
  auto mean = [](const Image& img) {
    double s = 0;
    for (float v : img.pixels) s += v;
    return s / static_cast<double>(img.pixels.size());
  };
  EXPECT_GT(mean(render_toy_image(0, domain_style_preset("clean"), 32, 1)), 0.5);
  EXPECT_LT(mean(render_toy_image(0, domain_style_preset("inverted_noise"), 32, 1)), 0.5);
}

TEST(Dataset, UnknownPresetFails) { EXPECT_THROW(domain_style_preset("sepia"), ConfigError); }

TEST(Dataset, SpecValidationNamesField) {
  ToySpec spec = small_spec();
  spec.class_count = 1;
  try {
    spec.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("toy.class_count"), std::string::npos);
  }
  spec = small_spec();
  spec.class_count = kMaxToyClasses + 1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec();
  spec.domains.push_back(spec.domains[0]);
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Dataset, GenerateAndLoadRoundTrip) {
  const auto dir = testing::scratch_dir("gen");
  const ManifestSummary summary = generate_toy_dataset(small_spec(), dir);
  ASSERT_EQ(summary.domains.size(), 2u);
  EXPECT_EQ(summary.total(), 24u);
  const DomainStore store = load_manifest(dir / "clean.tsv");
  EXPECT_EQ(store.domain_id(), "clean");
  EXPECT_EQ(store.class_count(), 3);
  EXPECT_TRUE(store.labeled());
  ASSERT_EQ(store.size(), 12u);
  std::vector<int> per_class(3, 0);
  for (const auto& s : store.samples()) ++per_class[static_cast<std::size_t>(*s->label)];
  EXPECT_EQ(per_class, (std::vector<int>{4, 4, 4}));
  EXPECT_EQ(store[0].image.height, 16);

  // Regenerating with the same spec gives identical pixels.
  const auto dir2 = testing::scratch_dir("gen2");
  generate_toy_dataset(small_spec(), dir2);
  const DomainStore again = load_manifest(dir2 / "clean.tsv");
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_EQ(store[i].image, again[i].image);
}

TEST(Dataset, ManifestWriteReadRoundTrip) {
  const auto dir = testing::scratch_dir("manifest");
  generate_toy_dataset(small_spec(), dir);
  const DomainStore store = load_manifest(dir / "inverted_noise.tsv");
  write_manifest(store, dir / "copy" / "labels.tsv", dir);
  const DomainStore copy = load_manifest(dir / "copy" / "labels.tsv");
  ASSERT_EQ(copy.size(), store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    EXPECT_EQ(copy[i].sample_id, store[i].sample_id);
    EXPECT_EQ(copy[i].label, store[i].label);
    EXPECT_EQ(copy[i].image, store[i].image);
  }
  write_manifest(store, dir / "copy" / "hidden.tsv", dir, true);
  const DomainStore hidden = load_manifest(dir / "copy" / "hidden.tsv");
  EXPECT_FALSE(hidden.labeled());
  EXPECT_FALSE(hidden[0].label.has_value());
}

void expect_row_error(const std::string& body, const std::string& fragment) {
  const auto dir = testing::scratch_dir("bad_manifest");
  generate_toy_dataset(small_spec(), dir);
  {
    std::ofstream out(dir / "bad.tsv");
    out << body;
  }
  try {
    load_manifest(dir / "bad.tsv");
    FAIL() << "expected an error for:\n" << body;
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Dataset, ManifestErrorsNameTheRow) {
  expect_row_error("clean/0/000000.png\t0\nclean/0/missing.png\t0\n", "row 2");
  expect_row_error("clean/0/000000.png\t0\nclean/0/000001.png\tx\n", "row 2");
  expect_row_error("#mmda-manifest class_count=3\nclean/0/000000.png\t0\nclean/0/000001.png\t7\n", "row 3");
  expect_row_error("clean/0/000000.png\t0\nclean/0/000001.png\n", "row 1");
  expect_row_error("clean/0/000000.png\t0\nclean/0/000000.png\t0\n", "clean/0/000000.png");
}

TEST(Dataset, StoreRejectsInconsistentLabels) {
  auto s = std::make_shared<DomainSample>();
  s->image = Image(4, 4, 0.5f);
  s->domain_id = "d";
  s->sample_id = "a";
  EXPECT_THROW(DomainStore("d", 2, {s}, true), DataError);  // labeled store, missing label
  s->label = 5;
  EXPECT_THROW(DomainStore("d", 2, {s}, true), DataError);  // label out of range
  s->label = 1;
  EXPECT_THROW(DomainStore("e", 2, {s}, true), DataError);  // wrong domain
  EXPECT_THROW(DomainStore("d", 2, {s}, false), DataError); // label on unlabeled store
  EXPECT_NO_THROW(DomainStore("d", 2, {s}, true));
}

TEST(Dataset, SemiSupervisedSplitTakesExactlyPerClass) {
  const DomainStore store = testing::shape_store("t", 4, 10, 8, true, testing::plain_style("t"));
  const SemiSupervisedSplit split = split_semi_supervised(store, 3, 17);
  EXPECT_EQ(split.labeled.size(), 12u);
  EXPECT_EQ(split.unlabeled.size(), 28u);
  EXPECT_EQ(split.evaluation.size(), 28u);
  EXPECT_FALSE(split.unlabeled.labeled());
  std::vector<int> per_class(4, 0);
  std::set<std::string> labeled_ids;
  for (const auto& s : split.labeled.samples()) {
    ++per_class[static_cast<std::size_t>(*s->label)];
    labeled_ids.insert(s->sample_id);
  }
  EXPECT_EQ(per_class, (std::vector<int>{3, 3, 3, 3}));
  for (std::size_t i = 0; i < split.unlabeled.size(); ++i) {
    EXPECT_EQ(labeled_ids.count(split.unlabeled[i].sample_id), 0u);
    EXPECT_EQ(split.unlabeled[i].sample_id, split.evaluation[i].sample_id);
  }
  // Same seed, same split.
  const SemiSupervisedSplit again = split_semi_supervised(store, 3, 17);
  for (std::size_t i = 0; i < split.labeled.size(); ++i)
    EXPECT_EQ(again.labeled[i].sample_id, split.labeled[i].sample_id);
  EXPECT_THROW(split_semi_supervised(store, 11, 1), DataError);
}

}  // namespace
}  // namespace mmda
