#pragma once

#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "tmap/models.hpp"

namespace tmap {

//! External forward model over a line-oriented stdin/stdout protocol
//! (version "tmap-bb/1"): one request per line
//!   t theta... xi... eta...
//! answered by one line of y values. The child runs for the lifetime of
//! this object.
class BlackBoxModel {
public:
  BlackBoxModel(std::string command, int n_theta, int n_y, int n_noise,
                int n_nuisance)
      : n_theta_(n_theta), n_y_(n_y), n_noise_(n_noise),
        n_nuisance_(n_nuisance) {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw std::runtime_error("pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), nullptr);
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    out_ = fdopen(to_child[1], "w");
    in_ = fdopen(from_child[0], "r");
    if (!out_ || !in_) throw std::runtime_error("fdopen failed");
  }

  ~BlackBoxModel() {
    if (out_) fclose(out_);
    if (in_) fclose(in_);
    if (pid_ > 0) {
      int status;
      waitpid(pid_, &status, 0);
    }
  }

  BlackBoxModel(const BlackBoxModel&) = delete;
  BlackBoxModel& operator=(const BlackBoxModel&) = delete;

  VectorXd evaluate(const VectorXd& theta, const VectorXd& xi,
                    const VectorXd& eta, int t) {
    std::ostringstream req;
    req.precision(17);
    req << t;
    for (int j = 0; j < theta.size(); ++j) req << " " << theta[j];
    for (int j = 0; j < xi.size(); ++j) req << " " << xi[j];
    for (int j = 0; j < eta.size(); ++j) req << " " << eta[j];
    req << "\n";
    const std::string line = req.str();
    if (fputs(line.c_str(), out_) == EOF || fflush(out_) != 0)
      throw std::runtime_error("black-box write failed");
    char buf[4096];
    if (!fgets(buf, sizeof(buf), in_))
      throw std::runtime_error("black-box read failed");
    std::istringstream resp(buf);
    VectorXd y(n_y_);
    for (int j = 0; j < n_y_; ++j)
      if (!(resp >> y[j]))
        throw std::runtime_error("black-box response too short");
    return y;
  }

  //! Wraps this process as a ForwardModel. The wrapper references *this;
  //! keep the BlackBoxModel alive while the ForwardModel is used.
  ForwardModel as_forward_model() {
    ForwardModel m;
    m.n_theta = n_theta_;
    m.n_y = n_y_;
    m.n_noise = n_noise_;
    m.n_nuisance = n_nuisance_;
    m.call = [this](const VectorXd& th, const VectorXd& xi, const VectorXd& eta,
                    int t) { return evaluate(th, xi, eta, t); };
    return m;
  }

private:
  int n_theta_, n_y_, n_noise_, n_nuisance_;
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  FILE* in_ = nullptr;
};

} // namespace tmap
