#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "stretchcap/io.hpp"
#include "temp_dir.hpp"

using namespace stretchcap;

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(Csv, SplitTrimsSpacesAndCarriageReturn) {
  const auto f = split_csv_line(" a, b ,,c\r");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0], "a");
  EXPECT_EQ(f[1], "b");
  EXPECT_EQ(f[2], "");
  EXPECT_EQ(f[3], "c");
}

TEST(Csv, ParseDouble) {
  EXPECT_DOUBLE_EQ(parse_double("1.5"), 1.5);
  EXPECT_DOUBLE_EQ(parse_double("+2e3"), 2000.0);
  EXPECT_TRUE(std::isnan(parse_double("")));
  EXPECT_TRUE(std::isnan(parse_double("NaN")));
  EXPECT_THROW(parse_double("1.5x"), std::invalid_argument);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-12, 123456789.123, std::numeric_limits<double>::min()})
    EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(FrameTableIo, RoundTrip) {
  TempDir dir;
  FrameTable t;
  t.columns = {"c0", "c1"};
  t.frames = {0, 1, 2};
  t.values.resize(3, 2);
  t.values << 1.0, 0.1, 2.0 / 3.0, std::numeric_limits<double>::quiet_NaN(), -4.0, 1e-300;
  write_text_file_atomic(dir / "t.csv", format_frame_table(t));
  const auto back = read_frame_table(dir / "t.csv");
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.frames, t.frames);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) {
      if (std::isnan(t.values(r, c)))
        EXPECT_TRUE(std::isnan(back.values(r, c)));
      else
        EXPECT_EQ(back.values(r, c), t.values(r, c));
    }
}

TEST(FrameTableIo, MalformedRowReportsLine) {
  TempDir dir;
  write_text_file_atomic(dir / "bad.csv", "frame,a,b\n0,1,2\n1,3\n");
  try {
    read_frame_table(dir / "bad.csv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(FrameTableIo, MissingHeaderAndEmptyFile) {
  TempDir dir;
  write_text_file_atomic(dir / "nohdr.csv", "0,1,2\n");
  EXPECT_THROW(read_frame_table(dir / "nohdr.csv"), FormatError);
  write_text_file_atomic(dir / "empty.csv", "");
  EXPECT_THROW(read_frame_table(dir / "empty.csv"), FormatError);
}

TEST(AtomicWrite, ReplacesContentsAndLeavesNoTemp) {
  TempDir dir;
  write_text_file_atomic(dir / "f.txt", "first");
  write_text_file_atomic(dir / "f.txt", "second");
  EXPECT_EQ(read_text_file(dir / "f.txt"), "second");
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1);
}
