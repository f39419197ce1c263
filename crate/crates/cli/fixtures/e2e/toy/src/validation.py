def validate_user(data):
    return bool(data) and "name" in data
