namespace synthval {}
