#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dnoc/checkpoint.hpp"

using namespace dnoc;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("checkpoints round trip every parameter exactly") {
  for (bool key_projection : {false, true}) {
    const auto m = Model::random({11, 5, 6, 4, 3}, {Addressing::raw_logit, key_projection, true}, 13);
    save_checkpoint("test_ckpt.bin", m, {{"variant", "placeholder"}});
    const auto ck = load_checkpoint("test_ckpt.bin");
    CHECK(flatten(ck.model) == flatten(m));
    CHECK(ck.model.key_w.size() == m.key_w.size());
    CHECK(ck.model.options.addressing == Addressing::raw_logit);
    CHECK(ck.model.options.cell_from_image);
    CHECK(ck.metadata.at("variant") == "placeholder");
    CHECK(ck.model.dims().vocab == 11);
    CHECK(ck.model.dims().feature == 3);
    save_checkpoint("test_ckpt2.bin", ck.model, ck.metadata);
    CHECK(read_file("test_ckpt.bin") == read_file("test_ckpt2.bin"));
  }
  std::remove("test_ckpt2.bin");
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto m = Model::random({9, 5, 6, 4, 6}, {}, 1);
  save_checkpoint("test_ckpt.bin", m);
  const std::string bytes = read_file("test_ckpt.bin");

  std::ofstream("test_ckpt_bad.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
  CHECK_THROWS_AS(load_checkpoint("test_ckpt_bad.bin"), CheckpointError);
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::ofstream("test_ckpt_bad.bin", std::ios::binary | std::ios::trunc) << wrong;
  CHECK_THROWS_AS(load_checkpoint("test_ckpt_bad.bin"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint.bin"), CheckpointError);
  std::remove("test_ckpt_bad.bin");
  std::remove("test_ckpt.bin");
}
