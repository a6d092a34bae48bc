// Placeholder main; the CLI is wired up once the experiment module lands.
int main() { return 0; }
