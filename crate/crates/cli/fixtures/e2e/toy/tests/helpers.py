def assert_contains(path, text):
    with open(path) as f:
        assert text in f.read()


def assert_not_contains(path, text):
    with open(path) as f:
        assert text not in f.read()
