// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sidetune/core/error.hpp"
#include "sidetune/core/parallel.hpp"

extern char** environ;

namespace sidetune {

struct OcrConfig {
  /// Executable name (looked up on PATH) or path.
  std::string engine = "tesseract";
  std::string language = "eng";
  /// Engine-internal threads, passed as OMP_THREAD_LIMIT.
  std::size_t threads = 4;
  double timeout_seconds = 120.0;
};

struct OcrResult {
  std::string text;
  double duration_ms = 0.0;
};

/// Resolves the engine to an executable path, or raises EngineMissing.
inline std::filesystem::path resolve_engine(const std::string& engine) {
  namespace fs = std::filesystem;
  auto executable = [](const fs::path& p) { return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0; };
  const std::string hint =
      " (install Tesseract, e.g. `apt-get install tesseract-ocr`, or set ocr.engine / --ocr-engine)";
  if (engine.empty()) fail(ErrorKind::EngineMissing, "no OCR engine configured" + hint);
  if (engine.find('/') != std::string::npos) {
    if (executable(engine)) return engine;
    fail(ErrorKind::EngineMissing, "OCR engine not executable: " + engine + hint);
  }
  const char* path_env = std::getenv("PATH");
  std::string path = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t end = std::min(path.find(':', start), path.size());
    const fs::path candidate = fs::path(path.substr(start, end - start).empty() ? "." : path.substr(start, end - start)) / engine;
    if (executable(candidate)) return candidate;
    start = end + 1;
  }
  fail(ErrorKind::EngineMissing, "OCR engine '" + engine + "' not found on PATH" + hint);
}

namespace ocr_detail {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) fail(ErrorKind::OcrFailure, std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

inline std::vector<std::string> child_environment(std::size_t threads) {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e)
    if (std::strncmp(*e, "OMP_THREAD_LIMIT=", 17) != 0) env.emplace_back(*e);
  env.push_back("OMP_THREAD_LIMIT=" + std::to_string(std::max<std::size_t>(threads, 1)));
  return env;
}

}  // namespace ocr_detail

/// Runs `<engine> <image> stdout -l <language>` and returns its standard
/// output. Nonzero exit raises OcrFailure with the engine's stderr; exceeding
/// the timeout kills the process and raises Timeout.
inline OcrResult run_ocr(const std::filesystem::path& image_path, const OcrConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto engine = resolve_engine(cfg.engine);
  if (!std::filesystem::is_regular_file(image_path))
    fail(ErrorKind::IoError, "image not found: " + image_path.string());

  const auto started = clock::now();
  ocr_detail::Pipe out, err;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out.fd[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.fd[1], STDERR_FILENO);

  std::vector<std::string> args{engine.string(), image_path.string(), "stdout", "-l", cfg.language};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  auto env = ocr_detail::child_environment(cfg.threads);
  std::vector<char*> envp;
  for (auto& e : env) envp.push_back(e.data());
  envp.push_back(nullptr);

  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, engine.c_str(), &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) fail(ErrorKind::EngineMissing, "cannot start " + engine.string() + ": " + std::strerror(rc));
  out.close_write();
  err.close_write();

  std::string stdout_text, stderr_text;
  std::array<pollfd, 2> fds{{{out.fd[0], POLLIN, 0}, {err.fd[0], POLLIN, 0}}};
  std::array<std::string*, 2> sinks{&stdout_text, &stderr_text};
  const auto deadline = started + std::chrono::duration<double>(cfg.timeout_seconds);
  std::size_t open = 2;
  char buf[8192];
  while (open > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (left <= 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      fail(ErrorKind::Timeout, "OCR of " + image_path.string() + " exceeded " + std::to_string(cfg.timeout_seconds) + " s");
    }
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left, 1000)));
    if (ready < 0 && errno != EINTR) break;
    for (std::size_t k = 0; k < fds.size(); ++k) {
      if (fds[k].fd < 0 || !(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t n = ::read(fds[k].fd, buf, sizeof(buf));
      if (n > 0) {
        sinks[k]->append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        fds[k].fd = -1;
        --open;
      }
    }
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    while (!stderr_text.empty() && (stderr_text.back() == '\n' || stderr_text.back() == '\r')) stderr_text.pop_back();
    const auto nl = stderr_text.rfind('\n');
    const std::string last = nl == std::string::npos ? stderr_text : stderr_text.substr(nl + 1);
    const std::string code = WIFEXITED(status) ? "exit " + std::to_string(WEXITSTATUS(status))
                                               : "signal " + std::to_string(WTERMSIG(status));
    fail(ErrorKind::OcrFailure, "OCR engine failed on " + image_path.string() + " (" + code + ")" +
                                    (last.empty() ? "" : ": " + last));
  }
  OcrResult result;
  result.text = std::move(stdout_text);
  result.duration_ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
  return result;
}

/// OCR of many pages on a bounded worker pool; results keep input order.
inline std::vector<OcrResult> run_ocr_batch(const std::vector<std::filesystem::path>& images, const OcrConfig& cfg,
                                            std::size_t workers) {
  resolve_engine(cfg.engine);
  std::vector<OcrResult> results(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) { results[i] = run_ocr(images[i], cfg); });
  return results;
}

}  // namespace sidetune
