from src.validation import validate_user


def register(data):
    if not validate_user(data):
        return {"error": "Invalid user data"}, 400
    return {"id": 1, **data}, 201


def update_profile(user, changes):
    if not changes:
        return {"error": "Nothing to update"}, 400
    user.update(changes)
    return user, 200
