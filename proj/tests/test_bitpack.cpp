// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace sherry;
using sherry::testing::random_dense_ternary;
using sherry::testing::random_sparse34;

namespace {

// All blocks with exactly three non-zeros, generated without the codec.
std::vector<Block> all_valid_blocks() {
  std::vector<Block> out;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c)
        for (int d = -1; d <= 1; ++d) {
          const Block blk{static_cast<std::int8_t>(a), static_cast<std::int8_t>(b),
                          static_cast<std::int8_t>(c), static_cast<std::int8_t>(d)};
          if (std::count(blk.begin(), blk.end(), 0) == 1)
            out.push_back(blk);
        }
  return out;
}

TernaryTensor tensor_from_codes(std::size_t rows, std::size_t cols, std::vector<std::int8_t> codes,
                                QuantScheme scheme = QuantScheme::absmean) {
  TernaryTensor t;
  t.rows = rows;
  t.cols = cols;
  t.codes = std::move(codes);
  t.scales.assign(cols, 1.0f);
  t.granularity = Granularity::per_channel();
  t.scheme = scheme;
  return t;
}

} // namespace

TEST(Block, ExactlyThirtyTwoPatternsBijective) {
  const auto blocks = all_valid_blocks();
  ASSERT_EQ(blocks.size(), 32u);
  std::set<std::pair<int, int>> seen;
  for (const auto &b : blocks) {
    const auto code = encode_block(b);
    EXPECT_LE(code.index, 15);
    EXPECT_LE(code.sign_bit, 1);
    seen.insert({code.sign_bit, code.index});
    EXPECT_EQ(decode_block(code.sign_bit, code.index), b);
  }
  EXPECT_EQ(seen.size(), 32u);
  for (int s = 0; s <= 1; ++s)
    for (int i = 0; i <= 15; ++i) {
      const auto b = decode_block(static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(i));
      EXPECT_EQ(std::count(b.begin(), b.end(), 0), 1);
      EXPECT_EQ(encode_block(b), (BlockCode{static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(i)}));
    }
}

TEST(Block, KnownCodes) {
  // zero at position 1, lead +1, second +1, third -1
  EXPECT_EQ(encode_block(Block{1, 0, 1, -1}), (BlockCode{0, 4 * 1 + 0 + 1}));
  // zero at position 3, lead -1, second +1, third -1
  EXPECT_EQ(encode_block(Block{-1, 1, -1, 0}), (BlockCode{1, 12 + 2 + 0}));
  EXPECT_EQ(decode_block(0, 0), (Block{0, 1, 1, 1}));
  EXPECT_EQ(decode_block(1, 15), (Block{-1, 1, 1, 0}));
}

TEST(Block, RejectsInvalid) {
  EXPECT_THROW(encode_block(Block{1, 1, 1, 1}), ConstraintError);
  EXPECT_THROW(encode_block(Block{0, 0, 1, 1}), ConstraintError);
  EXPECT_THROW(encode_block(Block{0, 2, 1, 1}), ConstraintError);
  EXPECT_THROW(decode_block(0, 16), FormatError);
  EXPECT_THROW(decode_block(2, 0), FormatError);
}

TEST(Tl2, CodeUnitRoundTrip) {
  std::set<int> seen;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        const auto u = tl2_code_unit(static_cast<std::int8_t>(a), static_cast<std::int8_t>(b),
                                     static_cast<std::int8_t>(c));
        EXPECT_EQ(u, (a + 1) + 3 * (b + 1) + 9 * (c + 1));
        EXPECT_EQ(tl2_decode_unit(u), (std::array<std::int8_t, 3>{static_cast<std::int8_t>(a),
                                                                   static_cast<std::int8_t>(b),
                                                                   static_cast<std::int8_t>(c)}));
        seen.insert(u);
      }
  EXPECT_EQ(seen.size(), 27u);
}

TEST(Pack, SherryLayoutByteExact) {
  // one column, three blocks: indices 5, 0, 14; signs 0, 1, 1
  const auto t = tensor_from_codes(12, 1, {1, 0, 1, -1, 0, -1, -1, -1, -1, 1, -1, 0},
                                   QuantScheme::sparse34);
  const auto p = pack(t, PackScheme::sherry125);
  EXPECT_EQ(p.index_plane, (std::vector<std::uint8_t>{0x05 | (0x0 << 4), 14}));
  EXPECT_EQ(p.sign_plane, (std::vector<std::uint8_t>{0b110}));
  EXPECT_TRUE(p.payload.empty());
}

TEST(Pack, Dense2BitLayoutByteExact) {
  const auto t = tensor_from_codes(5, 1, {-1, 0, 1, -1, 1});
  const auto p = pack(t, PackScheme::dense2bit);
  EXPECT_EQ(p.payload, (std::vector<std::uint8_t>{0b11'01'00'11, 0b01}));
}

TEST(Pack, Tl2LayoutByteExact) {
  // groups (1,1,1)=26, (-1,0,pad 0)=0+3+9=12
  const auto t = tensor_from_codes(5, 1, {1, 1, 1, -1, 0});
  const auto p = pack(t, PackScheme::tl2ref);
  ASSERT_EQ(p.payload.size(), 2u);
  EXPECT_EQ(p.payload[0], static_cast<std::uint8_t>(26 | (12 << 5)));
  EXPECT_EQ(p.payload[1], static_cast<std::uint8_t>(12 >> 3));
}

TEST(Pack, RoundTripAllSchemes) {
  std::mt19937_64 rng(21);
  for (auto g : {Granularity::per_tensor(), Granularity::per_channel(), Granularity::per_group(8)}) {
    for (int trial = 0; trial < 30; ++trial) {
      const auto s = random_sparse34(24 + 8 * (trial % 3), 1 + trial % 5, g, rng);
      for (auto scheme : {PackScheme::sherry125, PackScheme::dense2bit, PackScheme::tl2ref}) {
        const auto u = unpack(pack(s, scheme));
        EXPECT_TRUE(same_representation(u, s)) << to_string(scheme);
      }
      const auto d = random_dense_ternary(24, 3, g, rng);
      for (auto scheme : {PackScheme::dense2bit, PackScheme::tl2ref})
        EXPECT_TRUE(same_representation(unpack(pack(d, scheme)), d)) << to_string(scheme);
      EXPECT_ANY_THROW(pack(d, PackScheme::sherry125));
    }
  }
}

TEST(Pack, OddLengthsRoundTrip) {
  std::mt19937_64 rng(4);
  for (std::size_t d_in : {1u, 2u, 3u, 5u, 7u, 10u, 13u}) {
    const auto t = random_dense_ternary(d_in, 3, Granularity::per_channel(), rng);
    for (auto scheme : {PackScheme::dense2bit, PackScheme::tl2ref})
      EXPECT_TRUE(same_representation(unpack(pack(t, scheme)), t)) << d_in;
  }
}

TEST(Unpack, RejectsMalformed) {
  std::mt19937_64 rng(8);
  const auto t = random_sparse34(12, 2, Granularity::per_channel(), rng);

  auto p = pack(t, PackScheme::sherry125);
  p.index_plane[1] |= 0xF0; // padding nibble of the odd third block
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(t, PackScheme::sherry125);
  p.sign_plane[0] |= 0x80;
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(t, PackScheme::sherry125);
  p.index_plane.pop_back();
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(t, PackScheme::sherry125);
  p.scales.push_back(1.0f);
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(t, PackScheme::sherry125);
  p.scales[0] = NAN;
  EXPECT_THROW(unpack(p), FormatError);

  const auto d = tensor_from_codes(4, 1, {0, 0, 0, 0});
  p = pack(d, PackScheme::dense2bit);
  p.payload[0] = 0b10;
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(tensor_from_codes(3, 1, {0, 0, 0}), PackScheme::dense2bit);
  p.payload[0] = 0b01 << 6;
  EXPECT_THROW(unpack(p), FormatError);

  p = pack(tensor_from_codes(3, 1, {0, 0, 0}), PackScheme::tl2ref);
  p.payload[0] = 27;
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(tensor_from_codes(3, 1, {0, 0, 0}), PackScheme::tl2ref);
  p.payload[0] |= 0x80;
  EXPECT_THROW(unpack(p), FormatError);
  p = pack(tensor_from_codes(2, 1, {0, 0}), PackScheme::tl2ref);
  p.payload[0] = static_cast<std::uint8_t>(tl2_code_unit(0, 0, 1));
  EXPECT_THROW(unpack(p), FormatError);
}

TEST(Density, ExactSherryNumbers) {
  std::mt19937_64 rng(1);
  const auto t = random_sparse34(4096, 16, Granularity::per_channel(), rng);
  const auto r = density(pack(t, PackScheme::sherry125));
  EXPECT_EQ(r.payload_bits, 5u * 1024 * 16);
  EXPECT_EQ(r.payload_bytes, 640u * 16);
  EXPECT_EQ(r.scale_bits, 32u * 16);
}

TEST(Density, StrictOrderingFromTwelve) {
  std::mt19937_64 rng(2);
  for (std::size_t d_in = 12; d_in <= 256; d_in += 4) {
    const auto t = random_sparse34(d_in, 2, Granularity::per_channel(), rng);
    const auto s = density(pack(t, PackScheme::sherry125)).payload_bits;
    const auto l = density(pack(t, PackScheme::tl2ref)).payload_bits;
    const auto d = density(pack(t, PackScheme::dense2bit)).payload_bits;
    EXPECT_LT(s, l) << d_in;
    EXPECT_LT(l, d) << d_in;
  }
}

TEST(Density, StoredBytesWithinPaddingBound) {
  std::mt19937_64 rng(3);
  for (std::size_t d_in = 4; d_in <= 128; d_in += 4) {
    const auto t = random_sparse34(d_in, 3, Granularity::per_channel(), rng);
    const auto r = density(pack(t, PackScheme::sherry125));
    EXPECT_GE(8 * r.payload_bytes, r.payload_bits);
    EXPECT_LE(8 * r.payload_bytes, r.payload_bits + 11 * t.cols);
  }
}
