#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "surgtrack/datasets.hpp"
#include "surgtrack/metrics.hpp"

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace surgtrack;
using namespace surgtrack::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Run cli(const TempDir& dir, const std::string& args, const std::string& env = "") {
  const fs::path out = dir.path() / "stdout.txt", err = dir.path() / "stderr.txt";
  const std::string cmd = env + " '" SURGTRACK_CLI_PATH "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// A finetuned segmenter and a briefly trained tracker over a small synthetic set.
struct Fixture {
  TempDir dir{"cli_fixture"};
  Fixture() {
    REQUIRE(cli(dir, "synth --seed 3 --frames 6 --sequences 2 --out " + dir.str("data")).code == 0);
    REQUIRE(cli(dir, "finetune --data " + dir.str("data") + " --epochs 1 --lr 3e-3 --out " + dir.str("seg.ckpt")).code == 0);
    REQUIRE(cli(dir, "train-tracker --data " + dir.str("data") + " --iterations 3 --out " + dir.str("trk.ckpt")).code == 0);
  }
  std::string track_args(const std::string& out) const {
    return "track --video " + dir.str("data/seq_000") + " --ckpt-seg " + dir.str("seg.ckpt") + " --ckpt-track " +
           dir.str("trk.ckpt") + " --out " + out;
  }
};

}  // namespace

TEST_CASE("eval on identical prediction and GT directories prints 100.00") {
  TempDir dir("cli_eval");
  REQUIRE(cli(dir, "synth --seed 1 --frames 5 --out " + dir.str("data")).code == 0);
  const std::string seq = dir.str("data/seq_000");
  const Run r = cli(dir, "eval --pred " + seq + " --gt " + seq + " --model Oracle --out " + dir.str("r/report.json"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Oracle | 100.00 | 100.00 | 100.00") != std::string::npos);
  const SegReport rep = load_report(dir.str("r/report.json"));
  CHECK(format_percent(rep.miou) == "100.00");
  CHECK(rep.frames.size() == 5);
  CHECK(fs::exists(dir.path() / "r" / "report.txt"));
}

TEST_CASE("eval reports a prediction missing for a GT frame") {
  TempDir dir("cli_eval_missing");
  REQUIRE(cli(dir, "synth --seed 1 --frames 3 --out " + dir.str("data")).code == 0);
  fs::create_directories(dir.path() / "pred");
  fs::copy_file(dir.path() / "data/seq_000/masks/00000.png", dir.path() / "pred/00000.png");
  const Run r = cli(dir, "eval --pred " + dir.str("pred") + " --gt " + dir.str("data/seq_000") + " --out " + dir.str("r.json"));
  CHECK(r.code == 3);
  CHECK(r.err.rfind("ERROR data: no prediction for frame 1", 0) == 0);
}

TEST_CASE("finetune accepts the full-scale settings --epochs 10 --rank 512") {
  TempDir dir("cli_rank512");
  REQUIRE(cli(dir, "synth --seed 2 --frames 2 --out " + dir.str("data")).code == 0);
  const Run r = cli(dir, "finetune --data " + dir.str("data") + " --epochs 10 --rank 512 --seed 1 --out " + dir.str("big.ckpt"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("epoch 10 ") != std::string::npos);
  std::ifstream sum(dir.str("big.ckpt.summary.json"));
  const auto s = nlohmann::json::parse(sum);
  CHECK(s.at("epochs").get<int>() == 10);
  CHECK(s.at("checkpoint_id").get<std::string>().size() == 16);
  std::ifstream log(dir.str("big.ckpt.log.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 10);
}

TEST_CASE("unknown flags and missing subcommands are usage errors") {
  TempDir dir("cli_usage");
  Run r = cli(dir, "eval --bogus 1");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("ERROR usage:", 0) == 0);
  r = cli(dir, "");
  CHECK(r.code == 2);
  r = cli(dir, "finetune --data x --rank 0 --out y");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("ERROR ", 0) == 0);
  r = cli(dir, "report --inputs a.json --style fancy");
  CHECK(r.code == 2);
}

TEST_CASE("missing inputs exit with the data code") {
  TempDir dir("cli_data");
  const Run r = cli(dir, "finetune --data " + dir.str("nowhere") + " --out " + dir.str("x.ckpt"));
  CHECK(r.code == 3);
  CHECK(r.err.rfind("ERROR data:", 0) == 0);
}

TEST_CASE("report renders one model row per input report") {
  TempDir dir("cli_report");
  SegReport a, b;
  a.model = "Track Anything";
  a.miou = 86.75;
  a.macc = a.mdice = 95.58;
  b.model = "Fine-tuned SAM & XMem++";
  b.miou = 88.17;
  b.macc = b.mdice = 96.16;
  save_report(a, dir.str("a.json"));
  save_report(b, dir.str("b.json"));
  const Run r = cli(dir, "report --inputs " + dir.str("a.json") + "," + dir.str("b.json") + " --out " + dir.str("t.txt"));
  REQUIRE(r.code == 0);
  const std::string want =
      "Model                   | mIoU  | mAcc  | mDice\n"
      "------------------------+-------+-------+------\n"
      "Track Anything          | 86.75 | 95.58 | 95.58\n"
      "Fine-tuned SAM & XMem++ | 88.17 | 96.16 | 96.16\n";
  CHECK(r.out == want);
  CHECK(slurp(dir.path() / "t.txt") == want);
}

TEST_CASE("track writes one mask per frame and a report, reproducibly") {
  Fixture f;
  Run r = cli(f.dir, f.track_args(f.dir.str("out1")) + " --seed-k 2");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(load_mask_dir(f.dir.str("out1")).size() == 6);
  CHECK(fs::exists(f.dir.path() / "out1" / "report.json"));
  r = cli(f.dir, f.track_args(f.dir.str("out2")) + " --seed-k 2");
  REQUIRE(r.code == 0);
  for (const auto& e : fs::directory_iterator(f.dir.path() / "out1")) {
    CHECK(slurp(e.path()) == slurp(f.dir.path() / "out2" / e.path().filename()));
  }
}

TEST_CASE("track without a usable prompt is a seed error") {
  Fixture f;
  Run r = cli(f.dir, f.track_args(f.dir.str("o")) + " --prompt user-box");
  CHECK(r.code == 3);
  CHECK(r.err.rfind("ERROR seed: no prompt for seed frame 0", 0) == 0);
  r = cli(f.dir, f.track_args(f.dir.str("o")) + " --prompt user-box --box 0:4,4,30,30");
  CHECK_MESSAGE(r.code == 0, r.err);
  r = cli(f.dir, f.track_args(f.dir.str("o")) + " --seed-k 7");
  CHECK(r.code == 2);
}

TEST_CASE("relative checkpoint paths resolve under SURGTRACK_CKPT_DIR") {
  Fixture f;
  fs::create_directories(f.dir.path() / "ckpts");
  fs::copy_file(f.dir.path() / "seg.ckpt", f.dir.path() / "ckpts" / "s.ckpt");
  fs::copy_file(f.dir.path() / "trk.ckpt", f.dir.path() / "ckpts" / "t.ckpt");
  const std::string args = "track --video " + f.dir.str("data/seq_001") + " --ckpt-seg s.ckpt --ckpt-track t.ckpt --out " +
                           f.dir.str("env_out");
  CHECK(cli(f.dir, args, "SURGTRACK_CKPT_DIR='" + f.dir.str("ckpts") + "'").code == 0);
  CHECK(cli(f.dir, args, "SURGTRACK_CKPT_DIR=").code == 3);
}
