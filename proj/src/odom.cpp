namespace umd {}
