#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mpcnn/errors.hpp"
#include "mpcnn/manifest.hpp"

using namespace mpcnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mpcnn_manifest_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Csv, QuotingRoundTrips) {
  CsvTable t;
  t.header = {"path", "note"};
  t.rows = {{"a b.png", "plain"}, {"c,d.png", "say \"hi\""}, {"e.png", "two\nlines"}};
  const auto text = format_csv(t);
  const auto back = parse_csv(text);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Csv, CommentsBeforeHeaderAndCrlf) {
  const auto t = parse_csv("# seed=4\n# lr=0.1\r\nx,y\r\n1,2\r\n\r\n3,4");
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
}

TEST(Csv, RaggedRowsAndOpenQuotesFail) {
  EXPECT_THROW(parse_csv("a,b\n1\n"), Error);
  EXPECT_THROW(parse_csv("a,b\n\"1,2\n"), Error);
}

TEST(Csv, ColumnsLookupAndAdd) {
  auto t = parse_csv("a,b\n1,2\n");
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_FALSE(t.find_column("z"));
  EXPECT_THROW(t.column("z"), Error);
  EXPECT_EQ(t.add_column("g", "0"), 2u);
  EXPECT_EQ(t.rows[0][2], "0");
  EXPECT_EQ(t.add_column("a"), 0u);
}

TEST(Csv, WriteIsAtomicAndKeepsPreamble) {
  const auto dir = scratch("write");
  auto t = parse_csv("a\n1\n");
  write_csv(dir / "out.csv", t, "# hello\n");
  EXPECT_FALSE(fs::exists(dir / "out.csv.tmp"));
  std::ifstream in(dir / "out.csv");
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "# hello");
  EXPECT_EQ(read_csv(dir / "out.csv").rows, t.rows);
}

TEST(Manifest, ResolvesPathsAndOptionalColumns) {
  const auto dir = scratch("load");
  std::ofstream(dir / "m.csv") << "path,label,split,group,bilateral_path\n"
                                  "img/a.png,0,train,2,bil/a.png\n"
                                  "/abs/b.png,3,val,,\n"
                                  "c.png,3,train,1,\n";
  const auto m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].path, dir / "img/a.png");
  EXPECT_EQ(m.entries[0].bilateral_path, dir / "bil/a.png");
  EXPECT_EQ(m.entries[0].group, 2);
  EXPECT_EQ(m.entries[1].path, fs::path("/abs/b.png"));
  EXPECT_EQ(m.entries[1].group, 0);
  EXPECT_TRUE(m.entries[1].bilateral_path.empty());
  EXPECT_EQ(m.select("train").size(), 2u);
  EXPECT_EQ(m.select("train", 1).size(), 1u);
  EXPECT_EQ(m.select("val").front().label, 3);
}

TEST(Manifest, BadRowsAreDataErrors) {
  const auto dir = scratch("bad");
  const std::pair<const char*, ErrorKind> cases[] = {
      {"path,label\nx,1\n", ErrorKind::Decode},
      {"path,label,split\nx,one,train\n", ErrorKind::Decode},
      {"path,label,split\nx,-1,train\n", ErrorKind::InvalidLabel},
      {"path,label,split\nx,1,test\n", ErrorKind::Decode},
  };
  for (const auto& [text, kind] : cases) {
    std::ofstream(dir / "m.csv") << text;
    try {
      load_manifest(dir / "m.csv");
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), kind) << text;
      EXPECT_TRUE(e.is_data_error());
    }
  }
  EXPECT_THROW(load_manifest(dir / "absent.csv"), Error);
}
