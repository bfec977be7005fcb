#include <cstdio>

int main() {
  std::puts("tea: not wired up yet");
  return 0;
}
