from tests.helpers import assert_contains


def test_register_returns_201():
    assert_contains('src/app.py', 'return {"id": 1, **data}, 201')


def test_update_profile_returns_200():
    assert_contains('src/app.py', 'return user, 200')


def test_validation_requires_name():
    assert_contains('src/validation.py', '"name" in data')
