#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

struct Run {
  int status = -1;
  std::string out;
};

Run sfit(const std::string& args) {
  const std::string cmd = std::string(SFIT_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path dir() {
  const auto d = fs::temp_directory_path() / "sfit_cli_test";
  fs::create_directories(d);
  return d;
}

const std::string kData = "--blobs 200:3:16 --blob-seed 4 --blob-spread 0.6 --blob-noise 0.06";

}  // namespace

TEST_CASE("train, eval, attack and logits-stats on blobs") {
  const auto ckpt = (dir() / "m.ckpt").string(), log = (dir() / "log.jsonl").string();
  const auto rep = (dir() / "r.json").string(), csv = (dir() / "r.csv").string();
  auto t = sfit("train " + kData + " --arch tinymlp --hidden 16 --objective ce+mucs --iters 40 --eval-every 10 --out " +
                ckpt + " --log " + log);
  REQUIRE(t.status == 0);
  CHECK(fs::exists(ckpt));
  std::ifstream lines(log);
  std::string line;
  std::size_t records = 0;
  while (std::getline(lines, line)) records += line.empty() ? 0 : 1;
  CHECK(records >= 1);

  auto e = sfit("eval " + kData + " --checkpoint " + ckpt + " --out " + rep + " --csv " + csv);
  REQUIRE(e.status == 0);
  const auto j = nlohmann::json::parse(slurp(rep));
  CHECK(j.contains("clean_accuracy"));
  CHECK_FALSE(j.contains("robust_accuracy"));
  CHECK(fs::file_size(csv) > 0);

  auto a = sfit("eval " + kData + " --checkpoint " + ckpt + " --attack pgd:5 --attack fgsm");
  REQUIRE(a.status == 0);
  const auto ja = nlohmann::json::parse(a.out);
  CHECK(ja.at("attacks").size() == 2);

  auto at = sfit("attack " + kData + " --checkpoint " + ckpt + " --attack apgd:5 --limit 20");
  REQUIRE(at.status == 0);
  const auto jt = nlohmann::json::parse(at.out);
  CHECK(jt.at("max_linf").get<double>() <= 8.0 / 255.0 + 1e-7);

  auto s = sfit("logits-stats " + kData + " --checkpoint " + ckpt);
  REQUIRE(s.status == 0);
  CHECK(std::count(s.out.begin(), s.out.end(), '\n') >= 3);
}

TEST_CASE("the same seeds give identical checkpoints") {
  const auto a = (dir() / "a.ckpt").string(), b = (dir() / "b.ckpt").string();
  const std::string args = "train " + kData + " --arch tinymlp --hidden 8 --iters 15 --seed 3 --out ";
  REQUIRE(sfit(args + a).status == 0);
  REQUIRE(sfit(args + b).status == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("gradcheck exits zero") {
  auto g = sfit("gradcheck --cases 2 --quiet");
  CHECK(g.status == 0);
}

TEST_CASE("usage errors exit nonzero") {
  CHECK(sfit("").status != 0);
  CHECK(sfit("train --no-such-flag").status != 0);
  CHECK(sfit("eval " + kData + " --checkpoint /nonexistent/file.ckpt").status != 0);
  CHECK(sfit("eval --idx /nonexistent/a /nonexistent/b --checkpoint x").status != 0);
  CHECK(sfit("attack " + kData + " --checkpoint x --attack cw").status != 0);
}
