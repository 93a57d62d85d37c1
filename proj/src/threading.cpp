#include "como/threading.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace como {

namespace {

int resolve_worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("COMO_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) hw = std::min(hw, cap);
  }
  return hw;
}

// Minimal persistent pool. Jobs are (begin, end, worker) chunk calls; the
// submitting thread participates as worker 0 so a 1-worker pool spawns no
// threads at all.
class Pool {
 public:
  Pool() : workers_(resolve_worker_count()) {
    for (int w = 1; w < workers_; ++w) {
      threads_.emplace_back([this, w] { worker_loop(w); });
    }
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int workers() const { return workers_; }

  void run(long n, const std::function<void(long, long, int)>& fn) {
    if (n <= 0) return;
    int parts = static_cast<int>(std::min<long>(workers_, n));
    if (parts <= 1) {
      fn(0, n, 0);
      return;
    }
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = &fn;
      job_n_ = n;
      job_parts_ = parts;
      pending_ = parts - 1;  // workers 1..parts-1
      ++generation_;
    }
    cv_.notify_all();
    run_chunk(0);
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  void run_chunk(int part) {
    long chunk = (job_n_ + job_parts_ - 1) / job_parts_;
    long begin = static_cast<long>(part) * chunk;
    long end = std::min(job_n_, begin + chunk);
    if (begin < end) (*job_)(begin, end, part);
  }

  void worker_loop(int w) {
    unsigned long seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        if (w >= job_parts_) {
          if (--pending_ == 0) done_cv_.notify_one();
          continue;
        }
      }
      run_chunk(w);
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  bool stop_ = false;
  unsigned long generation_ = 0;
  const std::function<void(long, long, int)>* job_ = nullptr;
  long job_n_ = 0;
  int job_parts_ = 1;
  int pending_ = 0;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int worker_count() { return pool().workers(); }

void parallel_chunks(long n, const std::function<void(long, long, int)>& fn) {
  pool().run(n, fn);
}

void parallel_for(long n, const std::function<void(long)>& fn) {
  parallel_chunks(n, [&fn](long b, long e, int) {
    for (long i = b; i < e; ++i) fn(i);
  });
}

}  // namespace como
