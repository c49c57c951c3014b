#include <iostream>

int main() {
  std::cout << "trilevel cli placeholder\n";
  return 0;
}
